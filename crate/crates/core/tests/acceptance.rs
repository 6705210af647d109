//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chromabci::classifier::{train_two_phase, Model, ModelConfig, TrainConfig};
use chromabci::drive::{class_to_motor, gate_by_attention, step_kinematics, Action, ChassisConfig, MotorState, Pose, STOP};
use chromabci::evaluation::{
    aggregate_accuracy, evaluate, format_percent, groups_from_split, ratio_to_f64, rows_csv, weighted_accuracy,
    DataType, EvalRow,
};
use chromabci::nn::{attention_pool, grad_check, softmax, AttentionParams, Tensor};
use chromabci::rng::SeededStream;
use chromabci::session::{filter_quality, load_dataset, split_seen_unseen, write_dataset, Color, QualityFilter, SplitCounts};
use chromabci::synth::{generate_dataset, SynthConfig};
use chromabci::thinkgear::{encode_packet, frame_stream, DataRow, FramerState};
use num_rational::Ratio;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_arithmetic() -> Outcome {
    let rows = |counts: &[u64]| -> Vec<EvalRow> {
        let half = counts.len() / 2;
        counts
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let dt = if i < half { DataType::Seen } else { DataType::Unseen };
                EvalRow::from_counts(i + 1, dt, Color::ALL[i % half], 50, k).unwrap()
            })
            .collect()
    };
    let two = aggregate_accuracy(&rows(&[46, 45, 48, 48])).map_err(|e| e.to_string())?;
    let four = aggregate_accuracy(&rows(&[39, 38, 27, 36, 32, 34, 28, 29])).map_err(|e| e.to_string())?;
    check(
        two == Ratio::new(935, 1000) && four == Ratio::new(6575, 10000),
        format!("2-class {} ({two}), 4-class {} ({four})", format_percent(two), format_percent(four)),
    )
}

fn gradient_fidelity() -> Outcome {
    let cfg = ModelConfig {
        time_steps: 8,
        features: 3,
        lstm1_units: 5,
        lstm2_units: 4,
        attention_width: 3,
        dropout_rate: 0.0,
        input_scale: 1.0,
        classes: vec![Color::Red, Color::Blue, Color::Black],
        seed: 5,
        ..ModelConfig::default()
    };
    let mut model = Model::build_any_shape(cfg).map_err(|e| e.to_string())?;
    let mut rng = SeededStream::new(5, 77, 0, 0);
    let x = Tensor::from_vec(&[8, 2, 3], (0..48).map(|_| rng.uniform_range(-3.0, 3.0)).collect()).unwrap();
    let report = grad_check(&mut model, &x, &[0, 2], 1e-5, 1e-4).map_err(|e| e.to_string())?;
    check(
        report.passed() && report.checked == model.parameter_count(),
        format!("max relative error {:.3e} over {} entries", report.max_relative_error, report.checked),
    )
}

struct PipelineRun {
    checkpoint: Vec<u8>,
    csv: String,
    average: Ratio<u64>,
}

/// synth -> store -> load -> filter -> split -> two-phase train -> checkpoint -> evaluate
fn pipeline(dir: &Path, classes: &[Color], max_epochs: usize) -> Result<PipelineRun, String> {
    let e = |e: chromabci::Error| e.to_string();
    let counts = SplitCounts::default();
    let synth = SynthConfig::default();
    let data = dir.join("trials.tsv");
    let per_class = counts.train_per_class + counts.unseen_test_per_class;
    write_dataset(&data, &generate_dataset(&synth, classes, per_class).map_err(e)?).map_err(e)?;
    let (trials, _) = filter_quality(load_dataset(&data).map_err(e)?, QualityFilter::default());
    let split = split_seen_unseen(&trials, counts, 0).map_err(e)?;
    let model_cfg = ModelConfig { classes: classes.to_vec(), ..ModelConfig::default() };
    let train_cfg = TrainConfig { max_epochs, ..TrainConfig::default() };
    let out = train_two_phase(&split.train, &model_cfg, &train_cfg, None).map_err(e)?;
    let ckpt = dir.join("model.bin");
    out.model.save(&ckpt).map_err(e)?;
    let model = Model::load(&ckpt).map_err(e)?;
    let rows = evaluate(&model, &groups_from_split(&split, classes)).map_err(e)?;
    Ok(PipelineRun {
        checkpoint: std::fs::read(&ckpt).map_err(|e| e.to_string())?,
        csv: rows_csv(&rows).map_err(e)?,
        average: aggregate_accuracy(&rows).map_err(e)?,
    })
}

/// Epoch budget for the full-size runs, sized to the single-core time limit.
const FULL_MODEL_EPOCHS: usize = 10;

fn synthetic_training(two: &PipelineRun, four: &PipelineRun) -> Outcome {
    let (a2, a4) = (two.average, four.average);
    check(
        ratio_to_f64(a2) >= 0.95 && ratio_to_f64(a4) >= 0.80 && a4 <= a2,
        format!("2-class average {}, 4-class average {}", format_percent(a2), format_percent(a4)),
    )
}

fn noisy_label_protocol() -> Outcome {
    let e = |e: chromabci::Error| e.to_string();
    let classes = [Color::Red, Color::Blue];
    let counts = SplitCounts::default();
    let data = generate_dataset(&SynthConfig::default(), &classes, counts.train_per_class + counts.unseen_test_per_class)
        .map_err(e)?;
    let mut split = split_seen_unseen(&data, counts, 0).map_err(e)?;
    // flip a seeded fifth of the training labels; the test pools stay clean
    let mut idx: Vec<usize> = (0..split.train.len()).collect();
    SeededStream::new(0, 99, 0, 0).shuffle(&mut idx);
    let flips = split.train.len() / 5;
    for &i in &idx[..flips] {
        let t = &mut split.train[i];
        t.color = if t.color == classes[0] { classes[1] } else { classes[0] };
    }
    let model_cfg = ModelConfig {
        classes: classes.to_vec(),
        lstm1_units: 32,
        lstm2_units: 16,
        attention_width: 16,
        ..ModelConfig::default()
    };
    let max_epochs = 40;
    let train_cfg = TrainConfig { max_epochs, ..TrainConfig::default() };
    let out = train_two_phase(&split.train, &model_cfg, &train_cfg, None).map_err(e)?;
    let unseen: Vec<_> = groups_from_split(&split, &classes)
        .into_iter()
        .filter(|g| g.data_type == DataType::Unseen)
        .collect();
    let acc = |m: &Model| -> Result<f64, String> {
        Ok(ratio_to_f64(weighted_accuracy(&evaluate(m, &unseen).map_err(e)?).map_err(e)?))
    };
    let refit = acc(&out.model)?;
    let last = acc(out.phase1_final.as_ref().ok_or("no phase-1 model")?)?;
    let best = out.report.best_epoch;
    check(
        best < max_epochs && refit >= last - 0.02,
        format!(
            "{flips} labels flipped, best epoch {best} of {max_epochs}, unseen accuracy refit {:.1}% vs last scan epoch {:.1}%",
            refit * 100.0,
            last * 100.0
        ),
    )
}

fn random_rows(rng: &mut SeededStream) -> Vec<DataRow> {
    let n = rng.int_inclusive(1, 42) as usize;
    (0..n)
        .map(|_| match rng.int_inclusive(0, 2) {
            0 => DataRow::RawWave(rng.next_u64() as u16 as i16),
            1 => DataRow::Attention(rng.int_inclusive(0, 100) as u8),
            _ => DataRow::PoorSignal(rng.int_inclusive(0, 200) as u8),
        })
        .collect()
}

fn codec_robustness() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededStream::new(0, 500, 0, 0);
    let mut round_trips = 0;
    for _ in 0..10_000 {
        let rows = random_rows(&mut rng);
        let frame = encode_packet(&rows).map_err(|e| e.to_string())?;
        let (packets, state, _) = frame_stream(&frame, FramerState::default());
        if packets.len() == 1 && packets[0].rows == rows && state.pending().is_empty() {
            round_trips += 1;
        }
    }
    let mut silent = 0;
    for _ in 0..10_000 {
        let (a, b, c) = (random_rows(&mut rng), random_rows(&mut rng), random_rows(&mut rng));
        let mut fb = encode_packet(&b).unwrap();
        let pos = rng.int_inclusive(0, fb.len() as u64 - 1) as usize;
        fb[pos] ^= rng.int_inclusive(1, 255) as u8;
        let mut bytes = encode_packet(&a).unwrap();
        bytes.extend(&fb);
        bytes.extend(encode_packet(&c).unwrap());
        // idle bytes so a frame whose length byte grew still resolves
        bytes.extend([0u8; 200]);
        let (packets, _, _) = frame_stream(&bytes, FramerState::default());
        let ok = packets.len() >= 2
            && packets[0].rows == a
            && packets[packets.len() - 1].rows == c
            && packets[1..packets.len() - 1]
                .iter()
                .all(|p| p.rows.len() <= b.len() && p.rows == b[..p.rows.len()]);
        if !ok {
            silent += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        round_trips == 10_000 && silent == 0 && elapsed < 5.0,
        format!(
            "{round_trips}/10000 round trips, {silent} silent corruptions, {elapsed:.2} s"
        ),
    )
}

fn normalization() -> Outcome {
    let mut rng = SeededStream::new(0, 600, 0, 0);
    let mut worst = 0.0f64;
    let mut positive = true;
    for _ in 0..1000 {
        let k = rng.int_inclusive(2, 16) as usize;
        let scale = rng.uniform_range(0.1, 500.0);
        let z: Vec<f64> = (0..k).map(|_| rng.uniform_range(-scale, scale)).collect();
        let p = softmax(&Tensor::from_vec(&[1, k], z).unwrap());
        worst = worst.max((p.data().iter().sum::<f64>() - 1.0).abs());
        positive &= p.data().iter().all(|&v| v >= 0.0);
    }
    let softmax_worst = worst;
    for _ in 0..1000 {
        let t = rng.int_inclusive(1, 64) as usize;
        let u = rng.int_inclusive(1, 16) as usize;
        let a = rng.int_inclusive(1, 16) as usize;
        let p = AttentionParams::init("attention", u, a, &mut rng);
        let h = Tensor::from_vec(&[t, u], (0..t * u).map(|_| rng.uniform_range(-3.0, 3.0)).collect()).unwrap();
        let (_, w, _) = attention_pool(&h, &p).map_err(|e| e.to_string())?;
        worst = worst.max((w.data().iter().sum::<f64>() - 1.0).abs());
        positive &= w.data().iter().all(|&v| v > 0.0);
    }
    check(
        worst < 1e-9 && positive,
        format!("worst |sum - 1|: softmax {softmax_worst:.1e}, overall {worst:.1e}"),
    )
}

fn kinematics_oracle() -> Outcome {
    let chassis = ChassisConfig::default();
    let left = class_to_motor(2).map_err(|e| e.to_string())?;
    let exact = step_kinematics(Pose::default(), &left, 1.0, &chassis).map_err(|e| e.to_string())?;
    let (vl, vr) = chassis.wheel_velocities(&left);
    let (v, w) = ((vl + vr) / 2.0, (vr - vl) / chassis.track_width);
    let steps = 1_000_000;
    let dt = 1.0 / steps as f64;
    let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..steps {
        x += v * th.cos() * dt;
        y += v * th.sin() * dt;
        th += w * dt;
    }
    let dh = (exact.heading - th).rem_euclid(2.0 * PI);
    let euler_gap = (exact.x - x).abs().max((exact.y - y).abs()).max(dh.min(2.0 * PI - dh));

    let start = Pose { x: 0.4, y: -0.2, heading: 0.7 };
    let out = step_kinematics(start, &class_to_motor(1).unwrap(), 2.0, &chassis).unwrap();
    let back = step_kinematics(out, &class_to_motor(0).unwrap(), 2.0, &chassis).unwrap();
    let home_gap = (back.x - start.x).abs().max((back.y - start.y).abs());
    check(
        euler_gap < 1e-6 && home_gap < 1e-9 && back.heading == start.heading,
        format!("left turn vs Euler {euler_gap:.1e}, front-then-back {home_gap:.1e}"),
    )
}

fn command_mapping() -> Outcome {
    use MotorState::*;
    let want = [
        (AntiClockwise, AntiClockwise, Action::Back),
        (Clockwise, Clockwise, Action::Front),
        (Off, Clockwise, Action::Left),
        (Clockwise, Off, Action::Right),
    ];
    let rows_ok = (0..4u8).all(|c| {
        let m = class_to_motor(c).unwrap();
        (m.motor1, m.motor2, m.action) == want[c as usize]
    });
    let mut violations = 0;
    for class in 0..4u8 {
        for level in 0..=100u8 {
            for tau in 0..=100u8 {
                let passes = |t: u8| gate_by_attention(class, level, t).unwrap() != STOP;
                if passes(tau) && (0..tau).any(|lower| !passes(lower)) {
                    violations += 1;
                }
            }
        }
    }
    check(rows_ok && violations == 0, format!("table rows match: {rows_ok}, monotonicity violations: {violations}"))
}

fn determinism(first: &PipelineRun, second: &PipelineRun) -> Outcome {
    check(
        first.checkpoint == second.checkpoint && first.csv == second.csv,
        format!(
            "checkpoints {} bytes identical: {}, evaluation CSV identical: {}",
            first.checkpoint.len(),
            first.checkpoint == second.checkpoint,
            first.csv == second.csv
        ),
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, (r, secs): (Outcome, f64)| {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {n} {name}: {detail} ({secs:.1} s)");
    };

    report(1, "table arithmetic", timed(table_arithmetic));
    report(2, "gradient fidelity", timed(gradient_fidelity));

    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().expect("temp dir")).collect();
    let t = Instant::now();
    let two = pipeline(dirs[0].path(), &[Color::Red, Color::Blue], FULL_MODEL_EPOCHS);
    let four = pipeline(dirs[1].path(), &Color::ALL, FULL_MODEL_EPOCHS);
    let c3 = match (&two, &four) {
        (Ok(a), Ok(b)) => synthetic_training(a, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(3, "synthetic training", (c3, t.elapsed().as_secs_f64()));

    report(4, "two-phase protocol under label noise", timed(noisy_label_protocol));
    report(5, "codec robustness", timed(codec_robustness));
    report(6, "normalization invariants", timed(normalization));
    report(7, "kinematics oracle", timed(kinematics_oracle));
    report(8, "command mapping", timed(command_mapping));

    let t = Instant::now();
    let again = pipeline(dirs[2].path(), &[Color::Red, Color::Blue], FULL_MODEL_EPOCHS);
    let c9 = match (&two, &again) {
        (Ok(a), Ok(b)) => determinism(a, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(9, "determinism", (c9, t.elapsed().as_secs_f64()));

    if failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
