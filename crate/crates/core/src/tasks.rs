//! Bundled task sources and parameter-list builders.
//!
//! All sources are plain task-language text and compile with the default
//! options. Register addresses are spelled out as constants because the task
//! language has no preprocessor.

/// Entry returns immediately.
pub const EMPTY: &str = r#"// Does nothing.
int task_entry()
{
    return 0;
}
"#;

/// The basic IQ collection task: `repetitions` shots starting at sequencer
/// address `start_pc`, one IQ pair per shot, all in one data box.
pub const BASIC: &str = r#"#include "task.h"
#include "recmodule.h"
#include "sequencer.h"

int task_entry()
{
	uint32_t *param_list = rtos_GetParameters();
	uint32_t param_count = rtos_GetParametersSize() / sizeof(uint32_t);
	if (param_count != 2)
	{
		rtos_PrintfError("Please provide exactly 2 parameters (got %u)", param_count);
		return -1;
	}
	uint32_t repetitions = param_list[0];
	uint32_t start_pc = param_list[1];

	iq_pair *data_iq = rtos_GetDataBox(repetitions * sizeof(iq_pair));

	// Ensure sequencer is ready for current task
	sequencer_wait_while_busy();

	for (uint32_t i = 0; i < repetitions; i++)
	{
		sequencer_wait_until_qubit_relaxed();

		sequencer_start_at(start_pc);

		// Wait until result available
		sequencer_wait_while_busy();
		recmodule_wait_while_busy(0);

		recmodule_get_iq_pair(0, data_iq + i);

		rtos_SetProgress(i + 1);
	}

	rtos_FinishDataBox(data_iq);
	return 0;
}
"#;

/// Streaming variant of [`BASIC`] used for histograms: results go out in
/// boxes of at most `chunk` pairs, finished as soon as they fill.
pub const HISTOGRAM: &str = r#"// Params: shots, start_pc, relaxation delay (ns), pairs per box.
const uint32_t SEQ_RELAX_DELAY = 0x100C;

int task_entry()
{
    uint32_t *p = rtos_GetParameters();
    uint32_t count = rtos_GetParametersSize() / sizeof(uint32_t);
    if (count != 4) {
        rtos_PrintfError("expected 4 parameters (shots, start_pc, delay_ns, chunk), got %u", count);
        return -1;
    }
    uint32_t shots = p[0];
    uint32_t start_pc = p[1];
    uint32_t chunk = p[3];
    if (chunk == 0) {
        rtos_ReportError("chunk must be positive");
        return -2;
    }

    reg_write(SEQ_RELAX_DELAY, p[2]);
    sequencer_wait_while_busy();

    uint32_t done = 0;
    while (done < shots) {
        uint32_t n = shots - done;
        if (n > chunk)
            n = chunk;
        iq_pair *box = rtos_GetDataBox(n * sizeof(iq_pair));
        if (box == NULL) {
            rtos_PrintfError("no box memory after %u shots", done);
            return -3;
        }
        for (uint32_t i = 0; i < n; i++) {
            sequencer_wait_until_qubit_relaxed();
            sequencer_start_at(start_pc);
            sequencer_wait_while_busy();
            recmodule_wait_while_busy(0);
            recmodule_get_iq_pair(0, box + i);
            rtos_SetProgress(done + i + 1);
        }
        rtos_FinishDataBox(box);
        done += n;
    }
    return 0;
}
"#;

/// Averaged second-order correlation of the two capture channels.
///
/// Params: averages, samples per trace, relaxation delay (ns), method
/// (0 = library FFT over all lags, 1 = direct sum over `lags` lags), lags.
/// Output box: `samples` complex doubles (re, im) holding the running sum.
pub const G2: &str = r#"const uint32_t SEQ_RELAX_DELAY = 0x100C;
const uint32_t REC0 = 0x3000;
const uint32_t REC1 = 0x3100;
const uint32_t REC_TRACE_DATA = 0x18;
const uint32_t REC_TRACE_LEN = 0x1C;
const uint32_t DUAL_CAPTURE = 8;

// Sign-extended halves of a packed sample.
int sample_i(uint32_t w)
{
    return ((int)(w << 16)) >> 16;
}

int sample_q(uint32_t w)
{
    return ((int)w) >> 16;
}

void capture(uint32_t *words, uint32_t n)
{
    sequencer_wait_until_qubit_relaxed();
    sequencer_start_at(DUAL_CAPTURE);
    sequencer_wait_while_busy();
    recmodule_wait_while_busy(0);
    recmodule_wait_while_busy(1);
    for (uint32_t j = 0; j < n; j++)
        words[j] = reg_read(REC0 + REC_TRACE_DATA);
    for (uint32_t j = 0; j < n; j++)
        words[n + j] = reg_read(REC1 + REC_TRACE_DATA);
}

// out[k] += sum_m A[m] * A[m + k] with A[m] = conj(s1[m]) * s2[m]
void direct(uint32_t *words, double *prod, double *out, uint32_t n, uint32_t lags)
{
    for (uint32_t m = 0; m < n; m++) {
        double a = sample_i(words[m]);
        double b = sample_q(words[m]);
        double c = sample_i(words[n + m]);
        double d = sample_q(words[n + m]);
        prod[2 * m] = a * c + b * d;
        prod[2 * m + 1] = a * d - b * c;
    }
    for (uint32_t k = 0; k < lags; k++) {
        double re = 0.0;
        double im = 0.0;
        for (uint32_t m = 0; m + k < n; m++) {
            double xr = prod[2 * m];
            double xi = prod[2 * m + 1];
            double yr = prod[2 * (m + k)];
            double yi = prod[2 * (m + k) + 1];
            re += xr * yr - xi * yi;
            im += xr * yi + xi * yr;
        }
        out[2 * k] += re;
        out[2 * k + 1] += im;
    }
}

int task_entry()
{
    uint32_t *p = rtos_GetParameters();
    if (rtos_GetParametersSize() != 5 * sizeof(uint32_t)) {
        rtos_ReportError("expected 5 parameters (averages, samples, delay_ns, method, lags)");
        return -1;
    }
    uint32_t averages = p[0];
    uint32_t n = p[1];
    uint32_t method = p[3];
    uint32_t lags = p[4];
    if (n == 0 || lags > n) {
        rtos_PrintfError("bad sizes: samples=%u lags=%u", n, lags);
        return -2;
    }

    reg_write(SEQ_RELAX_DELAY, p[2]);
    reg_write(REC0 + REC_TRACE_LEN, n);
    reg_write(REC1 + REC_TRACE_LEN, n);

    uint32_t *words = rtos_GetDataBox(2 * n * sizeof(uint32_t));
    double *out = rtos_GetDataBox(2 * n * sizeof(double));
    double *prod = NULL;
    if (method == 1)
        prod = rtos_GetDataBox(2 * n * sizeof(double));
    if (words == NULL || out == NULL || (method == 1 && prod == NULL)) {
        rtos_ReportError("out of box memory");
        return -3;
    }

    sequencer_wait_while_busy();
    for (uint32_t a = 0; a < averages; a++) {
        capture(words, n);
        if (method == 0)
            fft_autocorrelate(words, out, n);
        else
            direct(words, prod, out, n, lags);
        rtos_SetProgress(a + 1);
    }

    rtos_DiscardDataBox(words);
    if (prod != NULL)
        rtos_DiscardDataBox(prod);
    rtos_FinishDataBox(out);
    return 0;
}
"#;

/// Loop order of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Outer loop over averages, inner loop over parameters.
    SweepThenAverage,
    /// Outer loop over parameters, inner loop over averages.
    AverageThenSweep,
}

impl SweepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMode::SweepThenAverage => "sweep_then_average",
            SweepMode::AverageThenSweep => "average_then_sweep",
        }
    }
}

impl std::str::FromStr for SweepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sweep_then_average" => Ok(SweepMode::SweepThenAverage),
            "average_then_sweep" => Ok(SweepMode::AverageThenSweep),
            _ => Err(format!("unknown sweep mode `{s}`")),
        }
    }
}

const SWEEP_TEMPLATE: &str = r#"// Parameter sweep, generated for @MODE@.
// Params: n_params, n_avg, delay_ns, start_pc, scale_start, scale_step.
// Output box: t_first, t_last, shots, then (sum_i, sum_q) per parameter,
// all doubles. Times are ns since task start at the end of a shot.
const uint32_t SEQ_RELAX_DELAY = 0x100C;
const uint32_t PG_MANIP_SCALE = 0x2000;

int task_entry()
{
    uint32_t *p = rtos_GetParameters();
    if (rtos_GetParametersSize() != 6 * sizeof(uint32_t)) {
        rtos_ReportError("expected 6 parameters (n_params, n_avg, delay_ns, start_pc, scale_start, scale_step)");
        return -1;
    }
    uint32_t n_params = p[0];
    uint32_t n_avg = p[1];
    uint32_t start_pc = p[3];
    uint32_t scale_start = p[4];
    uint32_t scale_step = p[5];

    double *out = rtos_GetDataBox((3 + 2 * n_params) * sizeof(double));
    if (out == NULL) {
        rtos_ReportError("out of box memory");
        return -3;
    }
    reg_write(SEQ_RELAX_DELAY, p[2]);
    sequencer_wait_while_busy();

    uint32_t total = n_params * n_avg;
    uint32_t shot = 0;
    double t = 0.0;
    uint32_t last = rtos_GetNsTimer();
    iq_pair pair;
@LOOPS@
        {
            reg_write(PG_MANIP_SCALE, scale_start + k * scale_step);
            sequencer_wait_until_qubit_relaxed();
            sequencer_start_at(start_pc);
            sequencer_wait_while_busy();
            recmodule_wait_while_busy(0);
            recmodule_get_iq_pair(0, &pair);
            uint32_t now = rtos_GetNsTimer();
            t += (double)(now - last);
            last = now;
            if (shot == 0)
                out[0] = t;
            out[1] = t;
            out[3 + 2 * k] += pair.i;
            out[4 + 2 * k] += pair.q;
            shot++;
            if ((shot & 255) == 0 || shot == total)
                rtos_SetProgress(shot);
        }
    out[2] = shot;
    rtos_FinishDataBox(out);
    return 0;
}
"#;

/// Task source for a sweep with the given loop order.
pub fn sweep_source(mode: SweepMode) -> String {
    let loops = match mode {
        SweepMode::SweepThenAverage => {
            "    for (uint32_t a = 0; a < n_avg; a++)\n        for (uint32_t k = 0; k < n_params; k++)"
        }
        SweepMode::AverageThenSweep => {
            "    for (uint32_t k = 0; k < n_params; k++)\n        for (uint32_t a = 0; a < n_avg; a++)"
        }
    };
    SWEEP_TEMPLATE
        .replace("@MODE@", mode.as_str())
        .replace("@LOOPS@", loops)
}

/// Micro-benchmarks. Params: operation, repetitions.
/// 0 register read, 1 register write, 2 1024-word register memcpy into a
/// box, 3 1024-element array multiply, 4 busy loop of relaxation waits
/// (used as a target for status polling). Output box: elapsed ns per
/// repetition as u32.
pub const BENCH: &str = r#"const uint32_t FABRIC_ID = 0x0000;
const uint32_t PG_MANIP_SCALE = 0x2000;
const uint32_t SEQ_RELAX_DELAY = 0x100C;
const uint32_t REC0_DURATION = 0x3020;
const uint32_t WORDS = 1024;

int task_entry()
{
    uint32_t *p = rtos_GetParameters();
    if (rtos_GetParametersSize() != 2 * sizeof(uint32_t)) {
        rtos_ReportError("expected 2 parameters (operation, repetitions)");
        return -1;
    }
    uint32_t op = p[0];
    uint32_t reps = p[1];
    uint32_t *times = rtos_GetDataBox(reps * sizeof(uint32_t));
    uint32_t *copy = rtos_GetDataBox(WORDS * sizeof(uint32_t));
    if (times == NULL || copy == NULL) {
        rtos_ReportError("out of box memory");
        return -3;
    }
    double a[1024];
    double b[1024];
    for (uint32_t i = 0; i < WORDS; i++) {
        a[i] = i;
        b[i] = 0.5 * i;
    }
    uint32_t sink = 0;
    for (uint32_t r = 0; r < reps; r++) {
        rtos_RestartTimer();
        if (op == 0) {
            sink += reg_read(FABRIC_ID);
        } else if (op == 1) {
            reg_write(PG_MANIP_SCALE, 1000);
        } else if (op == 2) {
            for (uint32_t i = 0; i < WORDS; i++)
                copy[i] = reg_read(REC0_DURATION);
        } else if (op == 3) {
            for (uint32_t i = 0; i < WORDS; i++)
                a[i] = a[i] * b[i];
        } else if (op == 4) {
            reg_write(SEQ_RELAX_DELAY, 100000);
            sequencer_start_at(3);
            sequencer_wait_while_busy();
            sequencer_wait_until_qubit_relaxed();
        } else {
            rtos_PrintfError("unknown operation %u", op);
            return -2;
        }
        times[r] = rtos_GetNsTimer();
        rtos_SetProgress(r + 1);
    }
    rtos_DiscardDataBox(copy);
    rtos_FinishDataBox(times);
    return sink == 0xFFFFFFFF;
}
"#;

/// The three tasks used for load timings.
pub const LOAD_SET: [(&str, &str); 3] = [("empty", EMPTY), ("basic", BASIC), ("complex", G2)];

/// Looks up a bundled source by name.
pub fn source(name: &str) -> Option<String> {
    Some(match name {
        "empty" => EMPTY.into(),
        "basic" => BASIC.into(),
        "histogram" => HISTOGRAM.into(),
        "complex" | "g2" => G2.into(),
        "bench" => BENCH.into(),
        "sweep_then_average" => sweep_source(SweepMode::SweepThenAverage),
        "average_then_sweep" => sweep_source(SweepMode::AverageThenSweep),
        _ => return None,
    })
}

pub const NAMES: [&str; 8] = [
    "empty",
    "basic",
    "histogram",
    "complex",
    "g2",
    "bench",
    "sweep_then_average",
    "average_then_sweep",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileOptions};

    #[test]
    fn every_bundled_task_compiles_both_ways() {
        for name in NAMES {
            let src = source(name).unwrap();
            for optimize in [false, true] {
                if let Err(d) = compile(&src, CompileOptions { optimize }) {
                    panic!("{name}: {}", crate::compiler::render_all(name, &d));
                }
            }
        }
    }
}
