//! printf subset shared by the compiler (static checks) and the engine.
//!
//! Supported: `%d %u %x %f %s` and `%%`, with optional `-`/`0` flags, a
//! width and, for `%f`, a precision. A length modifier `l` is accepted and
//! ignored.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("unterminated conversion at byte {0}")]
    Unterminated(usize),
    #[error("unsupported conversion `%{conv}` at byte {at}")]
    Unsupported { at: usize, conv: char },
    #[error("missing argument for conversion {0}")]
    MissingArgument(usize),
    #[error("bad string argument: {0}")]
    BadString(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conv {
    Signed,
    Unsigned,
    Hex,
    Float,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Spec {
    left: bool,
    zero: bool,
    width: usize,
    precision: Option<usize>,
    conv: Conv,
}

enum Piece<'a> {
    Text(&'a str),
    Percent,
    Conv(Spec),
}

fn parse(fmt: &str) -> Result<Vec<Piece<'_>>, FormatError> {
    let bytes = fmt.as_bytes();
    let mut pieces = Vec::new();
    let mut i = 0;
    let mut text_start = 0;
    while i < bytes.len() {
        if bytes[i] != b'%' {
            i += 1;
            continue;
        }
        if text_start < i {
            pieces.push(Piece::Text(&fmt[text_start..i]));
        }
        let at = i;
        i += 1;
        let mut spec = Spec {
            left: false,
            zero: false,
            width: 0,
            precision: None,
            conv: Conv::Signed,
        };
        while let Some(&c) = bytes.get(i) {
            match c {
                b'-' => spec.left = true,
                b'0' => spec.zero = true,
                _ => break,
            }
            i += 1;
        }
        while let Some(d) = bytes.get(i).filter(|c| c.is_ascii_digit()) {
            spec.width = spec
                .width
                .saturating_mul(10)
                .saturating_add(usize::from(d - b'0'));
            i += 1;
        }
        if bytes.get(i) == Some(&b'.') {
            i += 1;
            let mut p = 0usize;
            while let Some(d) = bytes.get(i).filter(|c| c.is_ascii_digit()) {
                p = p.saturating_mul(10).saturating_add(usize::from(d - b'0'));
                i += 1;
            }
            spec.precision = Some(p.min(30));
        }
        while bytes.get(i) == Some(&b'l') {
            i += 1;
        }
        let c = *bytes.get(i).ok_or(FormatError::Unterminated(at))?;
        i += 1;
        spec.conv = match c {
            b'%' => {
                pieces.push(Piece::Percent);
                text_start = i;
                continue;
            }
            b'd' => Conv::Signed,
            b'u' => Conv::Unsigned,
            b'x' => Conv::Hex,
            b'f' => Conv::Float,
            b's' => Conv::Str,
            other => {
                let conv = fmt[i - 1..].chars().next().unwrap_or(other as char);
                return Err(FormatError::Unsupported { at, conv });
            }
        };
        pieces.push(Piece::Conv(spec));
        text_start = i;
    }
    if text_start < bytes.len() {
        pieces.push(Piece::Text(&fmt[text_start..]));
    }
    Ok(pieces)
}

/// Conversions in order of appearance; used for static argument checks.
pub fn conversions(fmt: &str) -> Result<Vec<Conv>, FormatError> {
    Ok(parse(fmt)?
        .into_iter()
        .filter_map(|p| match p {
            Piece::Conv(s) => Some(s.conv),
            _ => None,
        })
        .collect())
}

/// Supplies arguments in order. Integer and float arguments come from
/// separate stacks, so only the relative order within each kind matters.
pub trait Args {
    fn next_int(&mut self) -> Option<u32>;
    fn next_float(&mut self) -> Option<f64>;
    /// Reads a NUL-terminated string through a (handle, offset) pointer.
    fn string(&mut self, handle: u32, offset: u32) -> Result<String, FormatError>;
}

pub fn format(fmt: &str, args: &mut dyn Args) -> Result<String, FormatError> {
    let mut out = String::with_capacity(fmt.len() + 16);
    for (n, piece) in parse(fmt)?.into_iter().enumerate() {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Percent => out.push('%'),
            Piece::Conv(spec) => {
                let missing = || FormatError::MissingArgument(n);
                let body = match spec.conv {
                    Conv::Signed => (args.next_int().ok_or_else(missing)? as i32).to_string(),
                    Conv::Unsigned => args.next_int().ok_or_else(missing)?.to_string(),
                    Conv::Hex => format!("{:x}", args.next_int().ok_or_else(missing)?),
                    Conv::Float => {
                        let v = args.next_float().ok_or_else(missing)?;
                        format!("{v:.*}", spec.precision.unwrap_or(6))
                    }
                    Conv::Str => {
                        let h = args.next_int().ok_or_else(missing)?;
                        let o = args.next_int().ok_or_else(missing)?;
                        args.string(h, o)?
                    }
                };
                pad(&mut out, &body, &spec);
            }
        }
    }
    Ok(out)
}

fn pad(out: &mut String, body: &str, spec: &Spec) {
    let len = body.chars().count();
    if len >= spec.width {
        out.push_str(body);
        return;
    }
    let fill = spec.width - len;
    if spec.left {
        out.push_str(body);
        out.extend(std::iter::repeat_n(' ', fill));
    } else if spec.zero && spec.conv != Conv::Str {
        let (sign, digits) = match body.strip_prefix('-') {
            Some(rest) => ("-", rest),
            None => ("", body),
        };
        out.push_str(sign);
        out.extend(std::iter::repeat_n('0', fill));
        out.push_str(digits);
    } else {
        out.extend(std::iter::repeat_n(' ', fill));
        out.push_str(body);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct V {
        ints: Vec<u32>,
        floats: Vec<f64>,
    }

    impl Args for V {
        fn next_int(&mut self) -> Option<u32> {
            (!self.ints.is_empty()).then(|| self.ints.remove(0))
        }
        fn next_float(&mut self) -> Option<f64> {
            (!self.floats.is_empty()).then(|| self.floats.remove(0))
        }
        fn string(&mut self, h: u32, o: u32) -> Result<String, FormatError> {
            Ok(format!("<{h}:{o}>"))
        }
    }

    fn run(fmt: &str, ints: &[u32], floats: &[f64]) -> Result<String, FormatError> {
        format(
            fmt,
            &mut V {
                ints: ints.to_vec(),
                floats: floats.to_vec(),
            },
        )
    }

    #[test]
    fn parameter_count_message() {
        assert_eq!(
            run(
                "Please provide exactly 2 parameters (%u provided)",
                &[3],
                &[]
            )
            .unwrap(),
            "Please provide exactly 2 parameters (3 provided)"
        );
    }

    #[test]
    fn conversions_and_padding() {
        assert_eq!(
            run("%d|%u|%x", &[u32::MAX, u32::MAX, 255], &[]).unwrap(),
            "-1|4294967295|ff"
        );
        assert_eq!(
            run("%5d|%-4u|%04d", &[7, 3, (-5i32) as u32], &[]).unwrap(),
            "    7|3   |-005"
        );
        assert_eq!(
            run("%f %.2f", &[], &[1.5, 2.0 / 3.0]).unwrap(),
            "1.500000 0.67"
        );
        assert_eq!(run("%s!", &[3, 8], &[]).unwrap(), "<3:8>!");
        assert_eq!(run("100%%", &[], &[]).unwrap(), "100%");
    }

    #[test]
    fn malformed_specs_are_errors() {
        assert!(matches!(
            run("%q", &[], &[]),
            Err(FormatError::Unsupported { .. })
        ));
        assert!(matches!(
            run("50%", &[], &[]),
            Err(FormatError::Unterminated(2))
        ));
        assert!(matches!(
            run("%d", &[], &[]),
            Err(FormatError::MissingArgument(_))
        ));
        assert_eq!(
            conversions("a %u b %f %s").unwrap(),
            vec![Conv::Unsigned, Conv::Float, Conv::Str]
        );
    }
}
