//! Tokenizer for the task language.

use super::diag::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int { value: u64, unsigned: bool },
    Float(f64),
    Str(Vec<u8>),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that maximal munch works with a linear scan.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~",
    "&", "|", "^", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let mut at_line_start = true;

    macro_rules! bump {
        ($n:expr) => {{
            for _ in 0..$n {
                if bytes[i] == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        let span = Span { line, col };
        if c == b'\n' {
            bump!(1);
            at_line_start = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            bump!(1);
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                bump!(1);
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            bump!(2);
            loop {
                if i + 1 >= bytes.len() {
                    return Err(Diagnostic::error(span, "unterminated block comment"));
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    bump!(2);
                    break;
                }
                bump!(1);
            }
            continue;
        }
        if c == b'#' && at_line_start {
            let start = i;
            while i < bytes.len() && bytes[i] != b'\n' {
                bump!(1);
            }
            let directive = src[start..i].trim();
            if !directive.starts_with("#include") && !directive.starts_with("#pragma") {
                return Err(Diagnostic::error(
                    span,
                    format!("preprocessor directive `{directive}` is not supported"),
                ));
            }
            continue;
        }
        at_line_start = false;

        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                bump!(1);
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_owned()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let (tok, len) = number(&src[i..]).map_err(|m| Diagnostic::error(span, m))?;
            bump!(len);
            out.push(Token { tok, span });
            continue;
        }
        if c == b'"' {
            bump!(1);
            let mut s = Vec::new();
            loop {
                match bytes.get(i) {
                    None | Some(b'\n') => {
                        return Err(Diagnostic::error(span, "unterminated string literal"))
                    }
                    Some(b'"') => {
                        bump!(1);
                        break;
                    }
                    Some(b'\\') => {
                        let (b, len) = escape(&bytes[i..])
                            .map_err(|m| Diagnostic::error(Span { line, col }, m))?;
                        s.push(b);
                        bump!(len);
                    }
                    Some(&b) => {
                        s.push(b);
                        bump!(1);
                    }
                }
            }
            // adjacent literals concatenate
            if let Some(Token {
                tok: Tok::Str(prev),
                ..
            }) = out.last_mut()
            {
                prev.extend(s);
            } else {
                out.push(Token {
                    tok: Tok::Str(s),
                    span,
                });
            }
            continue;
        }
        if c == b'\'' {
            bump!(1);
            let value = match bytes.get(i) {
                Some(b'\\') => {
                    let (b, len) = escape(&bytes[i..]).map_err(|m| Diagnostic::error(span, m))?;
                    bump!(len);
                    b
                }
                Some(&b) if b != b'\'' && b != b'\n' => {
                    bump!(1);
                    b
                }
                _ => return Err(Diagnostic::error(span, "empty character literal")),
            };
            if bytes.get(i) != Some(&b'\'') {
                return Err(Diagnostic::error(span, "unterminated character literal"));
            }
            bump!(1);
            out.push(Token {
                tok: Tok::Int {
                    value: u64::from(value),
                    unsigned: false,
                },
                span,
            });
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                bump!(p.len());
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
            }
            None => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(Diagnostic::error(
                    span,
                    format!("unexpected character `{ch}`"),
                ));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}

fn escape(b: &[u8]) -> Result<(u8, usize), String> {
    match b.get(1) {
        Some(b'n') => Ok((b'\n', 2)),
        Some(b't') => Ok((b'\t', 2)),
        Some(b'r') => Ok((b'\r', 2)),
        Some(b'0') => Ok((0, 2)),
        Some(b'\\') => Ok((b'\\', 2)),
        Some(b'"') => Ok((b'"', 2)),
        Some(b'\'') => Ok((b'\'', 2)),
        Some(b'x') => {
            let hex: Vec<u8> = b[2..]
                .iter()
                .take(2)
                .copied()
                .take_while(u8::is_ascii_hexdigit)
                .collect();
            if hex.is_empty() {
                return Err("\\x escape without digits".into());
            }
            let v = u8::from_str_radix(std::str::from_utf8(&hex).expect("ascii"), 16).expect("hex");
            Ok((v, 2 + hex.len()))
        }
        _ => Err("unknown escape sequence".into()),
    }
}

fn number(s: &str) -> Result<(Tok, usize), String> {
    let b = s.as_bytes();
    if b.len() > 1 && b[0] == b'0' && (b[1] == b'x' || b[1] == b'X') {
        let digits = b[2..].iter().take_while(|c| c.is_ascii_hexdigit()).count();
        if digits == 0 {
            return Err("hexadecimal literal without digits".into());
        }
        let value =
            u64::from_str_radix(&s[2..2 + digits], 16).map_err(|_| "integer literal too large")?;
        let (unsigned, suffix) = int_suffix(&b[2 + digits..]);
        return Ok((Tok::Int { value, unsigned }, 2 + digits + suffix));
    }
    let mut end = b.iter().take_while(|c| c.is_ascii_digit()).count();
    let mut is_float = false;
    if b.get(end) == Some(&b'.') {
        is_float = true;
        end += 1;
        end += b[end..].iter().take_while(|c| c.is_ascii_digit()).count();
    }
    if matches!(b.get(end), Some(b'e' | b'E')) {
        let mut j = end + 1;
        if matches!(b.get(j), Some(b'+' | b'-')) {
            j += 1;
        }
        let exp = b[j..].iter().take_while(|c| c.is_ascii_digit()).count();
        if exp > 0 {
            is_float = true;
            end = j + exp;
        }
    }
    if is_float {
        let v: f64 = s[..end].parse().map_err(|_| "malformed floating literal")?;
        return Ok((Tok::Float(v), end));
    }
    let value: u64 = s[..end].parse().map_err(|_| "integer literal too large")?;
    let (unsigned, suffix) = int_suffix(&b[end..]);
    Ok((Tok::Int { value, unsigned }, end + suffix))
}

fn int_suffix(b: &[u8]) -> (bool, usize) {
    let n = b
        .iter()
        .take_while(|c| matches!(c, b'u' | b'U' | b'l' | b'L'))
        .count();
    (b[..n].iter().any(|c| matches!(c, b'u' | b'U')), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn punctuation_uses_maximal_munch() {
        assert_eq!(
            toks("a<<=b->c"),
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("<<="),
                Tok::Ident("b".into()),
                Tok::Punct("->"),
                Tok::Ident("c".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn literals() {
        assert_eq!(
            toks("0x1F 10u 2.5 1e3 'A' \"a\\n\" \"b\""),
            vec![
                Tok::Int {
                    value: 31,
                    unsigned: false
                },
                Tok::Int {
                    value: 10,
                    unsigned: true
                },
                Tok::Float(2.5),
                Tok::Float(1000.0),
                Tok::Int {
                    value: 65,
                    unsigned: false
                },
                Tok::Str(b"a\nb".to_vec()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn includes_and_comments_are_skipped() {
        let t = tokenize("#include \"task.h\"\n// c\n/* x\n y */ int").unwrap();
        assert_eq!(t[0].tok, Tok::Ident("int".into()));
        assert_eq!(t[0].span, Span { line: 4, col: 7 });
    }

    #[test]
    fn unsupported_directive_is_an_error() {
        let e = tokenize("#define X 1\n").unwrap_err();
        assert!(e.message.contains("#define"));
    }
}
