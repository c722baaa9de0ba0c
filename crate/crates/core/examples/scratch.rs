//! Scratch harness for tuning study constants; not part of the public API.

use std::time::Instant;

use ndarray::Array2;
use tatum_core::dsp::features::{FeatureKind, FeatureSequence};
use tatum_core::dsp::plp::plp;
use tatum_core::dsp::{plp_from_audio, PlpConfig};
use tatum_core::hypothesis::{admissible, build_pool};
use tatum_core::synthbench::*;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "jump".into());
    match which.as_str() {
        "jump" => jump_study(),
        "osf" => osf_study(),
        "audio4" => audio_fidelity(),
        "fits" => tail_fits(),
        "selection" => selection(),
        "pretrain" => pretrain(),
        other => eprintln!("unknown mode {other}"),
    }
}

fn tail_fits() {
    use tatum_core::dsp::onset_strength;
    use tatum_core::dsp::stft::hann;
    use tatum_core::ingest::{AudioChunk, TARGET_SAMPLE_RATE};
    let sr = TARGET_SAMPLE_RATE;
    let dur = 12.0;
    let n = (dur * sr as f64) as usize;
    let start = 0.2;
    let mut samples = vec![0.0f32; n];
    let mut t = start;
    while t < dur - 0.05 {
        let sr_f = sr as f64;
        let s0 = (t * sr_f).round() as usize;
        for i in 0..(0.03 * sr_f) as usize {
            if s0 + i >= samples.len() {
                break;
            }
            let ph = 2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr_f;
            samples[s0 + i] += (ph.sin() * (-(i as f64) / (0.004 * sr_f)).exp()) as f32;
        }
        t += 0.5;
    }
    let chunk = AudioChunk { samples, sample_rate: sr, source_id: "f".into(), offset_s: 0.0 };
    let osf = onset_strength(&chunk).unwrap();
    let t_len = osf.num_frames();
    let curve: Vec<f64> = osf.frames.column(0).to_vec();

    // Replicate the tempogram argmax for chosen frames.
    let win_frames = 301usize;
    let half_w = win_frames / 2;
    let window = hann(win_frames);
    let report = |t: usize| {
        let lo = t.saturating_sub(half_w);
        let hi = (t + half_w).min(t_len - 1);
        // Match the real tempogram: remove the Hann-weighted mean in-window.
        let mut wsum = 0.0;
        let mut vsum = 0.0;
        for n in lo..=hi {
            let w = window[n + half_w - t];
            wsum += w;
            vsum += w * curve[n];
        }
        let wmean = vsum / wsum;
        let mut best_bpm = 0.0;
        let mut best_e = -1.0;
        let mut best_phase = 0.0;
        let mut e_at = |bpm: f64| {
            let f = bpm / 60.0;
            let delta = 2.0 * std::f64::consts::PI * f * 0.02;
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for n in lo..=hi {
                let v = window[n + half_w - t] * (curve[n] - wmean);
                let ph = delta * n as f64;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            (re * re + im * im, im.atan2(re))
        };
        for i in 0..571 {
            let bpm = 30.0 + i as f64;
            let (e, ph) = e_at(bpm);
            if e > best_e {
                best_e = e;
                best_bpm = bpm;
                best_phase = ph;
            }
        }
        let (e120, _) = e_at(120.0);
        let (e240, _) = e_at(240.0);
        let (e360, _) = e_at(360.0);
        // Where does the fitted cosine peak nearest this frame? cos has maxima
        // at omega*n + phase = 2*pi*m.
        let omega = 2.0 * std::f64::consts::PI * (best_bpm / 60.0) * 0.02;
        let m = ((omega * t as f64 + best_phase) / (2.0 * std::f64::consts::PI)).round();
        let peak_frame = (2.0 * std::f64::consts::PI * m - best_phase) / omega;
        println!(
            "frame {t} (t={:.2}s): argmax {best_bpm} BPM  peak@fr {peak_frame:.1}  E120 {:.1} E240 {:.1} E360 {:.1}",
            (t * 320 + 512) as f64 / sr as f64,
            e120,
            e240,
            e360
        );
    };
    for t in [0, 5, 10, 20, 30, 40, 50, 60, 75, 100, 300, 550, 570, 590, 596] {
        if t < t_len {
            report(t);
        }
    }
    // Raw onset curve around an interior click (6.3 s -> frame ~289) and the
    // final stretch of the signal.
    let show = |lo: usize, hi: usize| {
        let vals: Vec<String> = (lo..hi.min(t_len))
            .map(|i| format!("{:.2}", curve[i]))
            .collect();
        println!("osf[{lo}..{hi}]: {}", vals.join(" "));
    };
    show(0, 40);
    show(280, 320);
    show(t_len - 45, t_len);
}

fn audio_fidelity() {
    use tatum_core::dsp::frame_time;
    use tatum_core::ingest::{AudioChunk, TARGET_SAMPLE_RATE};
    let sr = TARGET_SAMPLE_RATE;
    for (win_s, ker_s) in [(6.0, 3.0), (6.0, 6.0)] {
        let cfg = PlpConfig { window_s: win_s, kernel_s: ker_s, ..PlpConfig::default() };
        for dur in [12.0f64, 24.0] {
            let mut tot_within = 0;
            let mut tot_peaks = 0;
            let mut all_meds = Vec::new();
            for start in [0.06, 0.2, 0.35] {
                let n = (dur * sr as f64) as usize;
                let mut samples = vec![0.0f32; n];
                let mut clicks = Vec::new();
                let mut t = start;
                while t < dur - 0.03 {
                    clicks.push(t);
                    let sr_f = sr as f64;
                    let s0 = (t * sr_f).round() as usize;
                    for i in 0..(0.03 * sr_f) as usize {
                        if s0 + i >= samples.len() {
                            break;
                        }
                        let ph = 2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr_f;
                        samples[s0 + i] +=
                            (ph.sin() * (-(i as f64) / (0.004 * sr_f)).exp()) as f32;
                    }
                    t += 0.5;
                }
                let chunk = AudioChunk {
                    samples,
                    sample_rate: sr,
                    source_id: "a4".into(),
                    offset_s: 0.0,
                };
                let r = plp_from_audio(&chunk, &cfg).unwrap();
                let offs: Vec<f64> = r
                    .peaks
                    .iter()
                    .map(|&p| {
                        let pt = frame_time(p, sr);
                        clicks
                            .iter()
                            .map(|&c| pt - c)
                            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                            .unwrap()
                    })
                    .collect();
                let within = offs.iter().filter(|o| o.abs() <= 0.020).count();
                let mut iv: Vec<i64> =
                    r.peaks.windows(2).map(|w| w[1] as i64 - w[0] as i64).collect();
                iv.sort_unstable();
                all_meds.push(iv[iv.len() / 2]);
                tot_within += within;
                tot_peaks += offs.len();
                let bad: Vec<(f64, i64)> = r
                    .peaks
                    .iter()
                    .zip(&offs)
                    .filter(|(_, o)| o.abs() > 0.020)
                    .map(|(&p, o)| (frame_time(p, sr), (1000.0 * o).round() as i64))
                    .collect();
                if !bad.is_empty() {
                    println!(
                        "  win {win_s} dur {dur} start {start}: bad (time, off ms) {bad:?}"
                    );
                }
            }
            println!(
                "win {win_s} ker {ker_s} dur {dur}: within {tot_within}/{tot_peaks} ({:.1}%) medians {all_meds:?}",
                100.0 * tot_within as f64 / tot_peaks as f64
            );
        }
    }
}

fn impulse_osf(t_len: usize, periods: &[(usize, usize)], offset: usize) -> FeatureSequence {
    // periods: list of (period, n_events) segments back to back.
    let mut v = vec![0.0; t_len];
    let mut i = offset;
    for &(p, n) in periods {
        for _ in 0..n {
            if i < t_len {
                v[i] = 1.0;
                if i + 1 < t_len {
                    v[i + 1] = 0.3;
                }
            }
            i += p;
        }
    }
    let frames = Array2::from_shape_vec((t_len, 1), v).unwrap();
    FeatureSequence::new(frames, 0.02, FeatureKind::Osf).unwrap()
}

fn osf_study() {
    let t_len = 600;
    for (win_s, ker_s) in [(6.0, 3.0), (6.0, 6.0)] {
        let cfg = PlpConfig { window_s: win_s, kernel_s: ker_s, ..PlpConfig::default() };
        println!("== window {win_s}s kernel {ker_s}s ==");
        // Steady trains across the period range.
        let mut bad_steady = 0;
        for period in 15..=40usize {
            let n = t_len / period + 1;
            let osf = impulse_osf(t_len, &[(period, n)], 2);
            let r = plp(&osf, &cfg);
            let ok = admissible(&r, 0.20);
            let iv: Vec<usize> = r.peaks.windows(2).map(|w| w[1] - w[0]).collect();
            let median = {
                let mut s = iv.clone();
                s.sort_unstable();
                s[s.len() / 2]
            };
            if !ok || median != period {
                bad_steady += 1;
                println!("  steady p={period} admissible={ok} median={median} iv={iv:?}");
            }
        }
        println!("  steady bad: {bad_steady}/26");
        // Jump trains: 25% interval jump at mid-chunk.
        let mut jump_pass = 0;
        for &p in &[20usize, 24, 28, 32] {
            let p2 = p * 5 / 4;
            let n1 = (t_len / 2) / p;
            let n2 = t_len / 2 / p2 + 1;
            let osf = impulse_osf(t_len, &[(p, n1), (p2, n2)], 2);
            let r = plp(&osf, &cfg);
            let ok = admissible(&r, 0.20);
            if ok {
                jump_pass += 1;
                let iv: Vec<usize> = r.peaks.windows(2).map(|w| w[1] - w[0]).collect();
                println!("  jump {p}->{p2} ACCEPTED iv={iv:?}");
            }
        }
        println!("  jump wrongly passing: {jump_pass}/4");
    }
}

fn jump_study() {
    let cfg = PlpConfig::default();
    let mut const_pass = 0;
    let mut jump_fail = 0;
    let n = 100;
    let t0 = Instant::now();
    for i in 0..n {
        let tempo = 80.0 + (i as f64) * 0.77 % 80.0;
        let steady = gen_tempo_jump_audio(tempo, 0.0, 12.0, i as u64).unwrap();
        let plp = plp_from_audio(&steady, &cfg).unwrap();
        let ok = admissible(&plp, 0.20);
        if ok {
            const_pass += 1;
        } else {
            let iv: Vec<usize> = plp.peaks.windows(2).map(|w| w[1] - w[0]).collect();
            println!("steady {i} tempo {tempo:.1} REJECTED intervals {iv:?}");
        }
        let jumpy = gen_tempo_jump_audio(tempo, 0.25, 12.0, 1000 + i as u64).unwrap();
        let plp = plp_from_audio(&jumpy, &cfg).unwrap();
        let ok = admissible(&plp, 0.20);
        if !ok {
            jump_fail += 1;
        } else {
            let iv: Vec<usize> = plp.peaks.windows(2).map(|w| w[1] - w[0]).collect();
            println!("jump {i} tempo {tempo:.1} ACCEPTED intervals {iv:?}");
        }
    }
    println!(
        "steady pass {const_pass}/{n}  jump fail {jump_fail}/{n}  in {:?}",
        t0.elapsed()
    );
}

fn selection() {
    let pool = build_pool(&[1, 2, 3, 4]).unwrap();
    let cfg = SelectionStudyConfig::default();
    let t0 = Instant::now();
    let table = run_selection_study(&cfg, &pool).unwrap();
    println!("{}", table.to_text());
    println!("elapsed {:?}", t0.elapsed());
}

fn pretrain() {
    let pool = build_pool(&[1, 2, 3, 4]).unwrap();
    let cfg = PretrainStudyConfig::default();
    let t0 = Instant::now();
    let report = run_pretrain_study(&cfg, &pool).unwrap();
    println!("{}", report.to_text());
    println!("elapsed {:?}", t0.elapsed());
}
