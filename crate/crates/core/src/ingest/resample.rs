//! Polyphase windowed-sinc sample rate conversion.
//!
//! A Kaiser-windowed sinc kernel (beta = 12) is tabulated at 512 fractional
//! phases with 64 taps per phase; coefficient rows are normalized to unit DC
//! gain and linearly interpolated between phases at runtime.

const TAPS: usize = 64;
const HALF: i64 = (TAPS / 2) as i64;
const PHASES: usize = 512;
const KAISER_BETA: f64 = 12.0;
const ROLLOFF: f64 = 0.95;

/// Resample `input` from `from_rate` to `to_rate`.
///
/// Returns the input unchanged when the rates already match. Samples outside
/// the input are treated as zero.
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    assert!(from_rate > 0 && to_rate > 0, "sample rates must be positive");
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }

    // Cutoff relative to the input rate, backed off from Nyquist.
    let cutoff = 0.5 * ROLLOFF * f64::min(1.0, to_rate as f64 / from_rate as f64);
    let table = build_table(cutoff);

    let n_out = ((input.len() as u64 * to_rate as u64) + (from_rate as u64) / 2)
        / from_rate as u64;
    let step = from_rate as f64 / to_rate as f64;

    let mut output = Vec::with_capacity(n_out as usize);
    for j in 0..n_out {
        let t = j as f64 * step;
        let n0 = t.floor() as i64;
        let frac = t - n0 as f64;
        let pos = frac * PHASES as f64;
        let q = pos.floor() as usize; // in [0, PHASES]
        let a = pos - q as f64;
        let row0 = &table[q];
        let row1 = &table[(q + 1).min(PHASES)];

        let mut acc = 0.0f64;
        for i in 0..TAPS {
            let idx = n0 - HALF + 1 + i as i64;
            if idx < 0 || idx >= input.len() as i64 {
                continue;
            }
            let coeff = row0[i] + a * (row1[i] - row0[i]);
            acc += coeff * input[idx as usize] as f64;
        }
        output.push(acc as f32);
    }
    output
}

/// Tabulate `PHASES + 1` rows of 64 kernel taps, each row normalized to unit sum.
fn build_table(cutoff: f64) -> Vec<[f64; TAPS]> {
    let mut table = Vec::with_capacity(PHASES + 1);
    for q in 0..=PHASES {
        let frac = q as f64 / PHASES as f64;
        let mut row = [0.0f64; TAPS];
        let mut sum = 0.0;
        for (i, slot) in row.iter_mut().enumerate() {
            // Tap at input offset (i - HALF + 1) relative to floor(t); kernel
            // argument is the distance from the exact (fractional) position.
            let x = (i as i64 - HALF + 1) as f64 - frac;
            let w = kaiser(x / HALF as f64);
            *slot = 2.0 * cutoff * sinc(2.0 * cutoff * x) * w;
            sum += *slot;
        }
        if sum != 0.0 {
            for slot in row.iter_mut() {
                *slot /= sum;
            }
        }
        table.push(row);
    }
    table
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Kaiser window on `[-1, 1]`; zero outside.
fn kaiser(x: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / bessel_i0(KAISER_BETA)
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_x = x / 2.0;
    for k in 1..64 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}
