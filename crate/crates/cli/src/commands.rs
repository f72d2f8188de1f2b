use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use keyed_nlfsr::apuf::{read_crps, write_crps, Crp};
use keyed_nlfsr::attacks::{
    all_input_bits, avalanche_test, collect_crps, cpa_attack, response_uniformity, split_crps,
    train_ml_attack, AvalancheReport, CrpMode, LfsrObfuscator, MlOptions, NlfsrObfuscator,
};
use keyed_nlfsr::bits::{state56_from_hex, STATE_BITS};
use keyed_nlfsr::fsr::{find_max_length_nlfsr, verify_period};
use keyed_nlfsr::leakage::{collect_traces, write_traces, ChallengeSource, LeakageConfig};
use keyed_nlfsr::protocol::{
    enroll as enroll_device, equivalent_plain_key, evaluate, Countermeasures, Device,
    EnrollOptions, KeyStore, NoiseStreams, Schedule,
};
use keyed_nlfsr::{BitState, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;

const ENROLL_STREAM: u64 = 0xe4_0011;
const SHARE_STREAM: u64 = 0x5_4a7e;

pub fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let bad = |field: &str, why: &str| Err(CliError::Config(format!("field `{field}`: {why}")));
    if let Some(label) = &cfg.countermeasures {
        parse_cm("countermeasures", label)?;
    }
    for label in &cfg.sca.countermeasures {
        parse_cm("sca.countermeasures", label)?;
    }
    if cfg.sca.countermeasures.is_empty() {
        return bad("sca.countermeasures", "empty");
    }
    if !matches!(cfg.avalanche.control.as_str(), "none" | "lfsr") {
        return bad("avalanche.control", "expected `none` or `lfsr`");
    }
    let [lo, hi] = cfg.avalanche.band;
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return bad("avalanche.band", "expected 0 <= lo <= hi <= 1");
    }
    if !matches!(cfg.eval.format.as_str(), "bits" | "hex") {
        return bad("eval.format", "expected `bits` or `hex`");
    }
    if cfg.threads == Some(0) {
        return bad("threads", "must be at least 1");
    }
    if cfg.ml.test == 0 {
        return bad("ml.test", "must be at least 1");
    }
    Ok(())
}

fn parse_cm(field: &str, label: &str) -> Result<Countermeasures, CliError> {
    Countermeasures::parse(label).map_err(|e| CliError::Config(format!("field `{field}`: {e}")))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn base_device(cfg: &ExperimentConfig) -> Result<Device, CliError> {
    match &cfg.device {
        Some(path) => Device::load(path).map_err(|e| match e {
            Error::Io(io) => io_err(path, io),
            other => CliError::Config(format!("{}: {other}", path.display())),
        }),
        None => {
            let cm = match &cfg.countermeasures {
                Some(l) => parse_cm("countermeasures", l)?,
                None => Countermeasures::NONE,
            };
            Ok(Device::reference(cfg.device_seed, cm)?)
        }
    }
}

fn enroll_options(cfg: &ExperimentConfig) -> EnrollOptions {
    EnrollOptions {
        trials: cfg.enroll.trials,
        evals_per_trial: cfg.enroll.evals_per_trial,
        uniformity_samples: cfg.enroll.uniformity_samples,
    }
}

/// Switches `base` to `cm`, resharing or recombining the key as needed and
/// enrolling when the PRNG has to be seeded.
fn adapt(base: &Device, cm: Countermeasures, cfg: &ExperimentConfig) -> Result<Device, CliError> {
    let mut d = base.clone();
    match (cm.masking, d.keystore) {
        (true, KeyStore::PlainOtp(k)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(SHARE_STREAM);
            d.keystore = KeyStore::shared_from(k, BitState::random(STATE_BITS, &mut rng)?);
        }
        (false, KeyStore::SharedOtp(..)) => {
            d.keystore = KeyStore::PlainOtp(equivalent_plain_key(&d)?);
        }
        _ => {}
    }
    let mut d = d.with_countermeasures(cm)?;
    if (cm.clock_randomization || cm.masking) && d.enrollment.is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(ENROLL_STREAM);
        enroll_device(&mut d, enroll_options(cfg), &mut rng)?;
    }
    Ok(d)
}

/// The configured device, with the requested countermeasures applied.
fn device(cfg: &ExperimentConfig) -> Result<Device, CliError> {
    let base = base_device(cfg)?;
    let cm = match &cfg.countermeasures {
        Some(l) => parse_cm("countermeasures", l)?,
        None => base.countermeasures,
    };
    adapt(&base, cm, cfg)
}

fn silence(mut d: Device, field: &str) -> Result<Device, CliError> {
    if d.countermeasures != Countermeasures::NONE {
        return Err(CliError::Config(format!(
            "field `{field}`: a noiseless APUF cannot seed the PRNG; use countermeasures `none`"
        )));
    }
    d.apuf = d.apuf.with_noise_sigma(0.0);
    Ok(d)
}

pub fn search_specs(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (width, trials) = (cfg.search.width, cfg.search.trials);
    let path = cfg.out.join(format!("specs_w{width}.json"));
    match find_max_length_nlfsr(width, trials, cfg.seed) {
        Ok(spec) => {
            let period = verify_period(&spec)?;
            let doc = json!({
                "width": width, "trials": trials, "seed": cfg.seed,
                "found": true, "spec": spec, "period": period,
            });
            write_text(&path, &pretty(&doc))?;
            println!("width {width}: period {period}");
            Ok(())
        }
        Err(Error::TrialsExhausted { trials, best }) => {
            let (spec, period) = best.unzip();
            let doc = json!({
                "width": width, "trials": trials, "seed": cfg.seed,
                "found": false, "best_spec": spec, "best_period": period,
            });
            write_text(&path, &pretty(&doc))?;
            Err(CliError::Failed(format!(
                "no maximum-length feedback in {trials} trials; longest orbit {period:?}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn avalanche_block(r: &AvalancheReport, lo: f64, hi: f64) -> serde_json::Value {
    let ok = r.all_within(lo, hi);
    json!({
        "summary": r.summary(),
        "outliers": r.outliers(lo, hi).len(),
        "binary": r.is_binary(),
        "verdict": if ok { "PASS" } else { "FAIL-SAC" },
    })
}

pub fn avalanche(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let a = &cfg.avalanche;
    let [lo, hi] = a.band;
    let schedule = Schedule {
        warmup: a.warmup,
        flush: a.flush,
        ..Schedule::default()
    };
    let config = match &cfg.device {
        Some(_) => base_device(cfg)?.nlfsr,
        None => keyed_nlfsr::defaults::nlfsr_config(),
    };
    let obf = NlfsrObfuscator { config, schedule };
    let report = avalanche_test(&obf, a.challenges, &all_input_bits(), cfg.seed)?;
    report.write_csv(create(&cfg.out.join("avalanche_nlfsr.csv"))?)?;
    let mut doc = json!({
        "band": a.band,
        "schedule": schedule,
        "nlfsr": avalanche_block(&report, lo, hi),
    });
    let s = report.summary();
    println!("nlfsr: min {:.4} max {:.4} mean {:.4}", s.min, s.max, s.mean);
    if a.control == "lfsr" {
        let control = avalanche_test(
            &LfsrObfuscator::control(schedule),
            a.challenges,
            &all_input_bits(),
            cfg.seed,
        )?;
        control.write_csv(create(&cfg.out.join("avalanche_lfsr.csv"))?)?;
        let block = avalanche_block(&control, lo, hi);
        println!(
            "lfsr control: binary {} verdict {}",
            control.is_binary(),
            block["verdict"].as_str().unwrap_or_default()
        );
        doc["lfsr_control"] = block;
    }
    write_text(&cfg.out.join("avalanche.json"), &pretty(&doc))?;
    if report.all_within(lo, hi) {
        println!("avalanche: PASS");
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "avalanche: {} entries outside [{lo}, {hi}]",
            report.outliers(lo, hi).len()
        )))
    }
}

fn slug(label: &str) -> String {
    label.replace('+', "_")
}

pub fn sca(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let s = &cfg.sca;
    let base = base_device(cfg)?;
    let leak = LeakageConfig {
        model: s.model,
        noise_sigma: s.noise,
        samples_per_cycle: s.samples_per_cycle,
        align: s.align,
        window: None,
    };
    let table_path = cfg.out.join("sca_table.csv");
    let mut table = csv::Writer::from_writer(create(&table_path)?);
    table.write_record([
        "countermeasures",
        "traces",
        "noise",
        "mean_true_rank",
        "chunks_rank1",
        "full_recovery",
        "max_peak",
        "null_threshold",
    ])?;
    println!("countermeasures  traces  mean_rank  rank1  recovered");
    for label in &s.countermeasures {
        let cm = parse_cm("sca.countermeasures", label)?;
        let d = adapt(&base, cm, cfg)?;
        let key = equivalent_plain_key(&d)?;
        let set = collect_traces(&d, s.traces, &ChallengeSource::Random, &leak, cfg.seed)?;
        if s.save_traces {
            let stem = cfg.out.join(format!("traces_{}", slug(label)));
            write_traces(
                &set,
                create(&stem.with_extension("puft"))?,
                create(&stem.with_extension("json"))?,
            )?;
        }
        let r = cpa_attack(&set, s.chunk_bits, s.target, Some(key))?;
        let mean = r.mean_true_rank().unwrap_or(f64::NAN);
        let rank1 = r.true_ranks().unwrap_or_default().iter().filter(|&&v| v == 1).count();
        let peak = r.peaks().into_iter().fold(f64::NEG_INFINITY, f64::max);
        table.write_record([
            cm.label().to_string(),
            s.traces.to_string(),
            s.noise.to_string(),
            format!("{mean:.2}"),
            rank1.to_string(),
            r.full_recovery().to_string(),
            format!("{peak:.5}"),
            format!("{:.5}", r.null_threshold),
        ])?;
        let doc = json!({
            "countermeasures": cm.label(),
            "traces": s.traces,
            "leakage": leak,
            "result": r,
        });
        write_text(&cfg.out.join(format!("sca_{}.json", slug(label))), &pretty(&doc))?;
        println!(
            "{:<16} {:>7} {:>10.2} {:>6} {:>10}",
            cm.label(),
            s.traces,
            mean,
            rank1,
            r.full_recovery()
        );
    }
    table.flush().map_err(|e| io_err(&table_path, e))?;
    Ok(())
}

fn gather_crps(
    cfg: &ExperimentConfig,
    mode: CrpMode,
    n: usize,
    noiseless: bool,
    field: &str,
) -> Result<Vec<Crp>, CliError> {
    let mut d = device(cfg)?;
    if noiseless {
        d = silence(d, field)?;
    }
    Ok(collect_crps(&d, n, mode, cfg.seed)?)
}

fn mode_name(m: CrpMode) -> &'static str {
    match m {
        CrpMode::Raw => "raw",
        CrpMode::Obfuscated => "obfuscated",
    }
}

pub fn crps(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let c = &cfg.crps;
    let set = gather_crps(cfg, c.mode, c.n, c.noiseless, "crps.noiseless")?;
    let path = c
        .output
        .clone()
        .unwrap_or_else(|| cfg.out.join(format!("crps_{}.csv", mode_name(c.mode))));
    write_crps(create(&path)?, &set)?;
    println!(
        "{} {} CRPs, uniformity {:.4}, written to {}",
        set.len(),
        mode_name(c.mode),
        response_uniformity(&set),
        path.display()
    );
    Ok(())
}

pub fn ml(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let m = &cfg.ml;
    let (crps, source) = match &m.input {
        Some(path) => {
            let f = File::open(path).map_err(|e| io_err(path, e))?;
            (read_crps(f)?, path.display().to_string())
        }
        None => (
            gather_crps(cfg, m.mode, m.n, m.noiseless, "ml.noiseless")?,
            format!("collected:{}", mode_name(m.mode)),
        ),
    };
    let (train, test) = split_crps(&crps, m.test)?;
    let opts = MlOptions {
        hidden: m.hidden.clone(),
        epochs: m.epochs,
        learning_rate: m.learning_rate,
        momentum: m.momentum,
        batch_size: m.batch_size,
        seed: cfg.seed,
    };
    let r = train_ml_attack(train, test, &opts)?;
    let doc = json!({ "source": source, "result": r, "majority_baseline": r.majority_baseline() });
    write_text(&cfg.out.join("ml.json"), &pretty(&doc))?;
    println!(
        "train {} test {}: test accuracy {:.4}, train accuracy {:.4}, majority baseline {:.4}",
        r.train_crps,
        r.test_crps,
        r.test_accuracy,
        r.train_accuracy,
        r.majority_baseline()
    );
    if let Some(min) = m.min_accuracy {
        if r.test_accuracy < min {
            return Err(CliError::Failed(format!(
                "test accuracy {:.4} below {min}",
                r.test_accuracy
            )));
        }
    }
    if let Some(margin) = m.max_over_bias {
        if r.test_accuracy > r.majority_baseline() + margin {
            return Err(CliError::Failed(format!(
                "test accuracy {:.4} exceeds baseline {:.4} + {margin}",
                r.test_accuracy,
                r.majority_baseline()
            )));
        }
    }
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let e = &cfg.eval;
    if e.challenge.is_empty() {
        return Err(CliError::Config("field `eval.challenge`: required".into()));
    }
    let c = state56_from_hex(&e.challenge)
        .map_err(|err| CliError::Config(format!("field `eval.challenge`: {err}")))?;
    let mut d = device(cfg)?;
    if e.noiseless {
        d = silence(d, "eval.noiseless")?;
    }
    if d.loads_zero_state(c) {
        eprintln!(
            "warning: zero-state obfuscation: key ^ challenge is zero, every obfuscated challenge is 0"
        );
    }
    let t = evaluate(&d, c, e.n_bits, &mut NoiseStreams::from_seed(cfg.seed))?;
    let out = match e.format.as_str() {
        "hex" => t
            .responses
            .chunks(8)
            .map(|byte| {
                let v = byte.iter().enumerate().fold(0u8, |a, (i, &b)| a | (b as u8) << i);
                format!("{v:02x}")
            })
            .collect::<String>(),
        _ => t.responses.iter().map(|&b| if b { '1' } else { '0' }).collect(),
    };
    println!("{out}");
    Ok(())
}

pub fn enroll(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut d = device(cfg)?;
    if d.enrollment.is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(ENROLL_STREAM);
        enroll_device(&mut d, enroll_options(cfg), &mut rng)?;
    }
    let path: PathBuf = cfg
        .enroll
        .output
        .clone()
        .unwrap_or_else(|| cfg.out.join("device.json"));
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    d.save(&path).map_err(|e| match e {
        Error::Io(io) => io_err(&path, io),
        other => other.into(),
    })?;
    println!("{}", serde_json::to_string(&d.enrollment).expect("serializable"));
    Ok(())
}
