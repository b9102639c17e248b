//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vidtel_core::broker::ProviderMap;
use vidtel_core::dns::{encode_a_reply, parse_dns_reply};
use vidtel_core::engine::{Engine, EngineConfig};
use vidtel_core::features::{attributes, cv, idle_fraction, mean_rate, TrafficProfile, SUBPROFILE_WINDOWS};
use vidtel_core::ml::{
    cross_validate, entropy, forest_grid, train_mlp, train_tree, tune_grid, AlgorithmParams, Dataset, MlpParams,
    TreeParams,
};
use vidtel_core::pipeline::{FlowKey, PacketRecord, Proto, SwitchState, POLL_CHUNK, PORT_MIRROR};
use vidtel_core::traffgen::{
    generate_dataset, stream_profile, DatasetConfig, GenParams, StreamKind, StreamSpec, StressConfig, StressTrace,
};
use vidtel_core::Resolution;

const SEED: u64 = 7;
const FLOWS: usize = 1000;
const FOLDS: usize = 10;
const GRID_TREES: usize = 10;

#[derive(Default)]
struct Tally {
    passed: usize,
    failed: usize,
}

impl Tally {
    fn check(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", detail.as_ref());
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn classifier_accuracy(t: &mut Tally) -> Dataset {
    let started = Instant::now();
    let sets = generate_dataset(&DatasetConfig::balanced(FLOWS, SEED), &GenParams::default());
    let id = cross_validate(&sets.identifier, &AlgorithmParams::default_identifier(), FOLDS, SEED).unwrap();
    let res = cross_validate(&sets.resolution, &AlgorithmParams::default_resolution(), FOLDS, SEED).unwrap();
    let elapsed = started.elapsed();
    t.check(
        "identifier 10-fold accuracy >= 0.90",
        id.accuracy >= 0.90,
        format!("{:.4} over {} instances", id.accuracy, sets.identifier.len()),
    );
    t.check(
        "resolution 10-fold accuracy >= 0.90",
        res.accuracy >= 0.90,
        format!("{:.4} over {} instances", res.accuracy, sets.resolution.len()),
    );
    t.check(
        "classifier generation and evaluation < 120 s",
        elapsed < Duration::from_secs(120),
        format!("{:.1} s", secs(elapsed)),
    );
    sets.identifier
}

fn grid_shape(t: &mut Tally, data: &Dataset) {
    let started = Instant::now();
    let grid = forest_grid(1..=12, 1..=6, GRID_TREES);
    let rows = tune_grid(data, &grid, FOLDS, SEED).unwrap();
    let depth = |r: &vidtel_core::ml::GridRow| match r.params {
        AlgorithmParams::Forest(p) => p.max_depth,
        _ => unreachable!(),
    };
    let best = rows[0].accuracy;
    let depth1 = rows
        .iter()
        .filter(|r| depth(r) == 1)
        .map(|r| r.accuracy)
        .fold(0.0, f64::max);
    let worst = rows.iter().map(|r| r.accuracy).fold(1.0, f64::min);
    t.check("grid has 72 rows", rows.len() == 72, format!("{} rows", rows.len()));
    t.check(
        "grid best exceeds depth-1 row by >= 3 points",
        best - depth1 >= 0.03,
        format!(
            "best {:.4} at depth {} ({}), depth-1 max {:.4}, range {:.4}..{:.4}, {:.1} s",
            best,
            depth(&rows[0]),
            rows[0].params,
            depth1,
            worst,
            best,
            secs(started.elapsed())
        ),
    );
}

fn realtime_curve(t: &mut Tally, data: &Dataset) {
    let out = cross_validate(data, &AlgorithmParams::default_identifier(), FOLDS, SEED).unwrap();
    let acc = |w: usize| {
        out.accuracy_where(data, |i| data.instances[i].window == Some(w))
            .unwrap()
    };
    let first = acc(0);
    let last = acc(SUBPROFILE_WINDOWS.len() - 1);
    let curve: Vec<String> = (0..SUBPROFILE_WINDOWS.len())
        .map(|w| format!("{:.3}", acc(w)))
        .collect();
    t.check(
        "identifier accuracy [65,128] exceeds [1,16] by >= 15 points",
        last - first >= 0.15,
        format!("{:.4} vs {:.4}; curve {}", last, first, curve.join(" ")),
    );
}

fn stress(t: &mut Tally) {
    let started = Instant::now();
    let config = StressConfig::default();
    let trace = StressTrace::new(config).unwrap();
    let generated = trace.total_bytes();
    let n_flows = trace.flows().len();
    let mut engine = Engine::new(EngineConfig::default(), ProviderMap::with_defaults(), None);
    for rec in trace {
        engine.process(&rec.packet);
    }
    engine.finish(Some(config.duration as f64));
    let elapsed = started.elapsed();
    let stats = engine.stats();

    t.check(
        "stress creates exactly 31920 reactive entries",
        stats.installs == 31_920 && n_flows == 31_920 && stats.table_full == 0,
        format!(
            "{} installs for {} flows, peak table {}",
            stats.installs,
            n_flows,
            stats.peak_entries()
        ),
    );

    // ramp-up: seconds between the first and last install, trimmed by the
    // partial seconds at either end
    let per_second: Vec<(u64, u64)> = stats.installs_per_second.iter().map(|(s, n)| (*s, *n)).collect();
    let first = per_second.first().map_or(0, |p| p.0);
    let last = per_second.last().map_or(0, |p| p.0);
    let inner: Vec<u64> = per_second
        .iter()
        .filter(|(s, _)| *s > first + 5 && *s + 5 < last)
        .map(|p| p.1)
        .collect();
    let mean = inner.iter().sum::<u64>() as f64 / inner.len().max(1) as f64;
    let (lo, hi) = (
        inner.iter().min().copied().unwrap_or(0),
        inner.iter().max().copied().unwrap_or(0),
    );
    t.check(
        "stress installs at 280/s during ramp-up",
        (mean - 280.0).abs() <= 280.0 * 0.05,
        format!(
            "mean {mean:.1}/s over {} s (min {lo}, max {hi}), installs span {first}..{last} s",
            inner.len()
        ),
    );

    let load = stats
        .mirror_load
        .iter()
        .filter(|(_, b)| **b > 0)
        .map(|(s, _)| *s)
        .max()
        .unwrap_or(0);
    t.check(
        "stress mirror load reaches 0 by t = 220 s",
        load < 220,
        format!("last mirrored second {load}"),
    );

    let polled: u64 = engine.switch.groups().map(|g| g.byte_count).sum();
    t.check(
        "stress polled plus mirrored bytes equal generated bytes",
        polled + stats.mirrored_bytes == generated && stats.total_bytes == generated,
        format!(
            "generated {generated}, polled {polled}, mirrored {}, replayed {}",
            stats.mirrored_bytes, stats.total_bytes
        ),
    );
    t.check(
        "stress replay < 300 s wall clock",
        elapsed < Duration::from_secs(300),
        format!("{:.1} s", secs(elapsed)),
    );
}

fn availability(t: &mut Tally) {
    let params = GenParams::default();
    let config = DatasetConfig::balanced(FLOWS, SEED);
    let mut kinds = Vec::new();
    for r in Resolution::ALL {
        for _ in 0..config.videos[r.index()] {
            kinds.push(StreamKind::Video {
                provider: "Youtube".into(),
                resolution: r,
            });
        }
    }
    kinds.extend(std::iter::repeat_n(StreamKind::Download, config.downloads));
    kinds.extend(std::iter::repeat_n(StreamKind::App, config.apps));
    let mut bad = 0;
    for (i, kind) in kinds.iter().enumerate() {
        let spec = StreamSpec {
            kind: kind.clone(),
            duration: 128,
            start_time: 0.0,
            seed: SEED + i as u64,
        };
        let profile = stream_profile(&spec, &params);
        if attributes(&profile.slice(0, 20)).available_timescales() != [1, 2, 4] {
            bad += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut wrong_len = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=200usize);
        let bins: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..1e6)).collect();
        let got = attributes(&TrafficProfile::new(0.0, bins)).available_timescales();
        let want: Vec<usize> = [1, 2, 4, 8, 16].into_iter().filter(|k| n / k >= 4).collect();
        if got != want {
            wrong_len += 1;
        }
    }
    t.check(
        "cv timescales available at age 20 s are exactly {1,2,4}",
        bad == 0 && wrong_len == 0,
        format!(
            "{bad} of {} flows differ; {wrong_len} of 1000 random lengths differ",
            kinds.len()
        ),
    );
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn feature_oracle(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=160usize);
        let bins: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    rng.gen_range(1.0..2e6f64).round()
                }
            })
            .collect();
        let p = TrafficProfile::new(0.0, bins.clone());
        let total: f64 = bins.iter().sum();
        let mu = total / n as f64;
        let idle = bins.iter().filter(|b| **b == 0.0).count() as f64 / n as f64;
        worst = worst
            .max(rel_err(mean_rate(&p), mu))
            .max(rel_err(idle_fraction(&p), idle));
        for k in [1, 2, 4, 8, 16] {
            let rates: Vec<f64> = bins.chunks_exact(k).map(|w| w.iter().sum::<f64>() / k as f64).collect();
            let want = if rates.len() < 4 || mu <= 0.0 {
                None
            } else {
                let m = rates.iter().sum::<f64>() / rates.len() as f64;
                let var = rates.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rates.len() as f64;
                Some(var.sqrt() / mu)
            };
            match (cv(&p, k), want) {
                (Some(a), Some(b)) => worst = worst.max(if b < 1e-12 { a } else { rel_err(a, b) }),
                (None, None) => {}
                _ => worst = f64::INFINITY,
            }
        }
    }
    t.check(
        "cv, mean and idle match two-pass oracles within 1e-9",
        worst < 1e-9,
        format!("max relative error {worst:.3e}"),
    );
}

fn split_oracle(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..500 {
        let n = rng.gen_range(2..=10usize);
        let n_attrs = rng.gen_range(1..=3usize);
        let mut data = Dataset::new(&["a", "b", "c"][..n_attrs], &["x", "y", "z"]);
        for _ in 0..n {
            let values = (0..n_attrs).map(|_| Some(rng.gen_range(0..5) as f64)).collect();
            data.push(values, rng.gen_range(0..3)).unwrap();
        }
        let tree = train_tree(
            &data,
            TreeParams {
                min_leaf: 1,
                max_depth: 1,
            },
        )
        .unwrap();
        let oracle = exhaustive_best(&data);
        checked += 1;
        let ok = match (tree.root_split(), oracle) {
            (None, None) => true,
            (Some((attr, threshold)), Some(best)) => {
                split_ratio(&data, attr, threshold).is_some_and(|r| (r - best).abs() < 1e-12)
            }
            _ => false,
        };
        if !ok {
            mismatches += 1;
        }
    }
    t.check(
        "tree root split matches exhaustive gain-ratio oracle",
        mismatches == 0,
        format!("{mismatches} of {checked} datasets differ"),
    );
}

fn class_weights(data: &Dataset, keep: impl Fn(f64) -> bool, attr: usize) -> Vec<f64> {
    let mut w = vec![0.0; data.n_classes()];
    for inst in &data.instances {
        if keep(inst.values[attr].unwrap()) {
            w[inst.label] += 1.0;
        }
    }
    w
}

fn split_ratio(data: &Dataset, attr: usize, threshold: f64) -> Option<f64> {
    let left = class_weights(data, |v| v <= threshold, attr);
    let right = class_weights(data, |v| v > threshold, attr);
    let (l, r): (f64, f64) = (left.iter().sum(), right.iter().sum());
    if l < 1.0 || r < 1.0 {
        return None;
    }
    let all: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
    let n = l + r;
    let gain = entropy(&all) - (l * entropy(&left) + r * entropy(&right)) / n;
    if gain <= 1e-12 {
        return None;
    }
    Some(gain / entropy(&[l, r]))
}

fn exhaustive_best(data: &Dataset) -> Option<f64> {
    let mut best: Option<f64> = None;
    for attr in 0..data.n_attributes() {
        let values: BTreeSet<u64> = data.instances.iter().map(|i| i.values[attr].unwrap() as u64).collect();
        let values: Vec<f64> = values.into_iter().map(|v| v as f64).collect();
        for pair in values.windows(2) {
            if let Some(r) = split_ratio(data, attr, (pair[0] + pair[1]) / 2.0) {
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best
}

fn mlp_gradient(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut data = Dataset::new(&["a", "b", "c"], &["x", "y", "z"]);
    for _ in 0..30 {
        let v: Vec<Option<f64>> = (0..3).map(|_| Some(rng.gen_range(-3.0..3.0))).collect();
        let label = usize::from(v[0].unwrap() > 0.0) + usize::from(v[1].unwrap() > 1.0);
        data.push(v, label).unwrap();
    }
    let params = MlpParams {
        hidden_units: 4,
        epochs: 5,
        learning_rate: 0.1,
    };
    let mut model = train_mlp(&data, params, SEED).unwrap();
    let xs: Vec<Vec<f64>> = data.instances.iter().map(|i| model.prepare(&i.values)).collect();
    let ys: Vec<usize> = data.instances.iter().map(|i| i.label).collect();
    let ws = vec![1.0; xs.len()];
    let (_, grad) = model.loss_and_gradient(&xs, &ys, &ws);
    let base = model.params_flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..base.len() {
        let mut p = base.clone();
        p[j] = base[j] + h;
        model.set_params_flat(&p);
        let up = model.loss_and_gradient(&xs, &ys, &ws).0;
        p[j] = base[j] - h;
        model.set_params_flat(&p);
        let down = model.loss_and_gradient(&xs, &ys, &ws).0;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad.0[j];
        if analytic.abs().max(numeric.abs()) > 1e-7 {
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    model.set_params_flat(&base);
    t.check(
        "mlp gradient matches finite differences within 1e-4",
        worst < 1e-4,
        format!("max relative error {worst:.3e} over {} parameters", base.len()),
    );
}

fn dns_fuzz(t: &mut Tally) {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-";
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = 0;
    for i in 0..1000u32 {
        let labels = rng.gen_range(1..=6);
        let mut name = String::new();
        for l in 0..labels {
            if l > 0 {
                name.push('.');
            }
            let len = rng.gen_range(1..=40);
            for _ in 0..len {
                name.push(ALPHABET[rng.gen_range(0..ALPHABET.len())] as char);
            }
        }
        let ips: Vec<Ipv4Addr> = (0..rng.gen_range(1..=4))
            .map(|_| Ipv4Addr::from(rng.gen::<u32>()))
            .collect();
        let ok = encode_a_reply(i as u16, &name, &ips)
            .ok()
            .and_then(|wire| parse_dns_reply(&wire, 1.0).ok())
            .is_some_and(|r| r.query_name == name.to_ascii_lowercase() && r.answer_ips == ips);
        if !ok {
            failures += 1;
        }
    }
    t.check(
        "dns encode/parse round trip on 1000 fuzzed names",
        failures == 0,
        format!("{failures} failures"),
    );
}

fn key(i: u16) -> FlowKey {
    FlowKey::new(
        Ipv4Addr::new(10, 1, 0, 1),
        Ipv4Addr::new(192, 168, 1, 1),
        443,
        40_000 + i,
        Proto::Tcp,
    )
}

fn pipeline_invariants(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut leaks, mut lost, mut timeout_errors) = (0, 0, 0);
    for _ in 0..200 {
        let mut sw = SwitchState::new(1000);
        let group = sw.ensure_group("p");
        let n_keys = rng.gen_range(1..=8u16);
        let mut sent = vec![0u64; n_keys as usize];
        let mut mirrored = vec![0u64; n_keys as usize];
        let mut clock = 0.0;
        for _ in 0..rng.gen_range(1..300) {
            clock += rng.gen_range(0..32) as f64 / 64.0;
            let k = rng.gen_range(0..n_keys);
            if rng.gen_bool(0.02) && sw.reactive_entry(&key(k)).is_none() {
                sw.install_reactive(key(k), group, clock).unwrap();
            }
            let bytes = rng.gen_range(1..1500);
            let installed = sw.reactive_entry(&key(k)).is_some();
            let d = sw.process_packet(&PacketRecord::new(clock, key(k), bytes));
            if installed && d.output_ports.contains(PORT_MIRROR) {
                leaks += 1;
            }
            sent[k as usize] += bytes;
            if d.is_mirrored() {
                mirrored[k as usize] += bytes;
            }
        }
        for k in 0..n_keys {
            let counted = sw.reactive_entry(&key(k)).map_or(0, |e| e.byte_count);
            if counted + mirrored[k as usize] != sent[k as usize] {
                lost += 1;
            }
        }
        let last = sw
            .reactive_entries()
            .map(|e| e.last_matched)
            .fold(f64::NEG_INFINITY, f64::max);
        if last.is_finite() {
            let idle: Vec<(FlowKey, f64)> = sw.reactive_entries().map(|e| (e.key, e.last_matched)).collect();
            let expired = sw.expire_idle(last + 60.0);
            for (k, seen) in &idle {
                if expired.contains(k) != (last + 60.0 - seen > 60.0) {
                    timeout_errors += 1;
                }
            }
            if sw.reactive_len() == 0 || sw.expire_idle(last + 60.0 + 1.0 / 64.0).is_empty() || sw.reactive_len() != 0 {
                timeout_errors += 1;
            }
        }
    }
    let mut chunk_errors = 0;
    for _ in 0..20 {
        let n = rng.gen_range(0..12_000usize);
        let mut sw = SwitchState::new(20_000);
        let g = sw.ensure_group("p");
        for i in 0..n {
            let k = FlowKey::new(
                Ipv4Addr::from(0x0a00_0000 + i as u32),
                Ipv4Addr::new(192, 168, 0, 1),
                443,
                50_000,
                Proto::Udp,
            );
            sw.install_reactive(k, g, 0.0).unwrap();
        }
        let snap = sw.poll_counters();
        let sizes: Vec<usize> = snap.parts().map(|p| p.len()).collect();
        let expect_parts = n.div_ceil(POLL_CHUNK);
        let full = sizes.iter().rev().skip(1).all(|s| *s == POLL_CHUNK);
        if sizes.len() != expect_parts || !full || sizes.iter().sum::<usize>() != n {
            chunk_errors += 1;
        }
    }
    t.check(
        "no mirroring after reactive install",
        leaks == 0,
        format!("{leaks} mirrored packets"),
    );
    t.check("per-flow byte conservation", lost == 0, format!("{lost} flows off"));
    t.check(
        "idle timeout is strict at 60 s",
        timeout_errors == 0,
        format!("{timeout_errors} violations"),
    );
    t.check(
        "counter replies chunked at 2500 entries",
        chunk_errors == 0,
        format!("{chunk_errors} bad replies"),
    );
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wants = |name: &str| only.is_empty() || only.iter().any(|o| name.contains(o.as_str()));
    let mut t = Tally::default();
    if wants("oracle") {
        feature_oracle(&mut t);
        split_oracle(&mut t);
        mlp_gradient(&mut t);
        dns_fuzz(&mut t);
    }
    if wants("pipeline") {
        pipeline_invariants(&mut t);
    }
    if wants("availability") {
        availability(&mut t);
    }
    if wants("stress") {
        stress(&mut t);
    }
    if wants("classifier") {
        let identifier = classifier_accuracy(&mut t);
        realtime_curve(&mut t, &identifier);
        grid_shape(&mut t, &identifier);
    }
    println!("acceptance: {} passed, {} failed", t.passed, t.failed);
    if t.failed > 0 {
        std::process::exit(1);
    }
}
