//! The subcommands. Each one fills a [`Run`] with tables and JSON documents
//! and reports whether its check passed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use folnerlab::additivity::{
    certify_almost_additive, certify_riesz_almost_additive, CertificationReport, ErrorMap, PartitionGen,
};
use folnerlab::ergodic::{pointwise_experiment, ShiftSystem};
use folnerlab::folner::{box_folner, CofinalScale};
use folnerlab::gallery::{self, gallery_cocycle, gallery_weak_gibbs};
use folnerlab::lattice::Window;
use folnerlab::realization::{extract_realization, ExtractConfig, RealizationError};
use folnerlab::sequences::{
    erdos_approximant, lyapunov_schedule, spectral_radius, ErdosOptions, ErrorSequence, FunctionSequence, MatrixCocycle,
    ERDOS_TERMS,
};
use folnerlab::setmaps::tail_sups;
use folnerlab::values::{ShiftSampling, Value};

use crate::config::{resolve_error, resolve_map, resolve_riesz, ExperimentConfig, MapSpec, SequenceSpec};
use crate::output::{Run, Table};
use crate::CliError;

/// Outcome of a completed subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

fn regime_json(r: &impl serde::Serialize) -> String {
    match serde_json::to_value(r) {
        Ok(Json::Object(m)) => {
            let kind = m.get("regime").and_then(Json::as_str).unwrap_or("unknown").to_string();
            let rest: Vec<String> =
                m.iter().filter(|(k, _)| k.as_str() != "regime").map(|(k, v)| format!("{k}={v}")).collect();
            if rest.is_empty() {
                kind
            } else {
                format!("{kind}({})", rest.join(";"))
            }
        }
        Ok(Json::Null) | Err(_) => "exact".into(),
        Ok(other) => other.to_string(),
    }
}

/// Builds the map, asking for a seed when its norms are sampled.
fn map_from_config(cfg: &ExperimentConfig) -> Result<MapSpec, CliError> {
    let name = cfg.map.as_deref().ok_or_else(|| CliError::Usage("map: required (pass --map or set \"map\")".into()))?;
    let map = resolve_map(name, cfg.dimension, &cfg.sampling(cfg.seed.unwrap_or(0)))?;
    if map.is_sampled() {
        cfg.require_seed(&format!("norm evaluation for map `{}`", map.name))?;
    }
    Ok(map)
}

/// Boxes `[0,n)^d` for `n ≤ max_side`, then seeded translates.
fn certify_windows(cfg: &ExperimentConfig) -> Result<Vec<Window>, CliError> {
    let d = cfg.dimension;
    let side = cfg.certify.max_side.max(1) as i64;
    let mut out: Vec<Window> = (1..=side).map(|n| Window::cube(d, n)).collect::<Result<_, _>>().map_err(compute)?;
    if cfg.certify.random_windows > 0 {
        let seed = cfg.require_seed("certify.random_windows")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..cfg.certify.random_windows {
            let lo: Vec<i64> = (0..d).map(|_| rng.gen_range(-32..=32)).collect();
            let hi: Vec<i64> = lo.iter().map(|&a| a + rng.gen_range(1..=side)).collect();
            out.push(Window::box_window(&lo, &hi).map_err(compute)?);
        }
    }
    Ok(out)
}

fn partition_generator(cfg: &ExperimentConfig) -> PartitionGen {
    if let Some(g) = &cfg.certify.partitions {
        return g.clone();
    }
    // Singletons first, so that ties for the worst case name the singleton partition.
    let mut parts = vec![PartitionGen::Singletons, PartitionGen::Grid { sides: None }];
    if let Some(m) = cfg.tiling.m {
        parts.push(PartitionGen::Tiling { sides: Some(vec![m]), max_offsets: 64 });
    }
    PartitionGen::All { parts }
}

fn report_json(label: &str, r: &CertificationReport) -> Json {
    json!({
        "error_map": label,
        "windows": r.windows,
        "partitions_tested": r.partitions_tested,
        "skipped": r.skipped,
        "max_violation": r.max_violation,
        "all_exact": r.all_exact,
        "pass": r.pass,
        "witness": r.witness,
    })
}

fn push_rows(table: &mut Table, mode: &str, label: &str, r: &CertificationReport) {
    for row in &r.rows {
        table.push(vec![
            mode.into(),
            label.into(),
            row.size.into(),
            row.partition_id.clone().into(),
            row.lhs.into(),
            row.budget.into(),
            row.margin.into(),
            row.exact.into(),
        ]);
    }
}

pub fn certify(cfg: &ExperimentConfig, run: &mut Run) -> Result<Status, CliError> {
    let map = map_from_config(cfg)?;
    let scale = cfg.scale()?;
    let windows = certify_windows(cfg)?;
    let gen = partition_generator(cfg);
    let error = cfg.error.as_deref().map(|s| resolve_error(s, &map, &windows, &scale)).transpose()?;

    let mut table = Table::new("certify", &["mode", "error_map", "size", "partition_id", "lhs", "budget", "margin", "exact"])
        .note(format!("map: {}; dimension {}", map.name, cfg.dimension))
        .note("size: |F| in lattice points")
        .note("norm mode: lhs = ‖φ(F) − Σ_E φ(E)‖, budget = Σ_E b(E), margin = budget − lhs")
        .note("riesz mode: lhs = ‖φ(F) − Σ_E φ(E)‖, budget = ‖Σ_E ξ(E)‖, margin = −sup(|φ(F) − Σ_E φ(E)| − Σ_E ξ(E))")
        .note("lhs, budget and margin are in the value-space norm of the map");
    let mut summary = json!({
        "map": map.name,
        "dimension": cfg.dimension,
        "windows": windows.len(),
        "partition_generator": gen,
        "scale_cap": scale.cap,
    });
    let mut pass = true;

    let run_norm = error.is_some() || cfg.riesz_error.is_none();
    if run_norm {
        let b: Arc<dyn ErrorMap> = match &error {
            Some(b) => b.clone(),
            None => map.error.clone().ok_or_else(|| CliError::Usage("error: required (pass --error)".into()))?,
        };
        let r = certify_almost_additive(map.map.as_ref(), b.as_ref(), &gen, &windows, &scale).map_err(compute)?;
        push_rows(&mut table, "norm", &b.name(), &r);
        summary["norm"] = report_json(&b.name(), &r);
        pass &= r.pass;
    }
    if let Some(spec) = &cfg.riesz_error {
        let family = resolve_riesz(spec, &map, error.clone().or_else(|| map.error.clone()))?;
        let mut members = Vec::new();
        let mut any = false;
        for xi in &family {
            let r = certify_riesz_almost_additive(map.map.as_ref(), xi.as_ref(), &gen, &windows, &scale)
                .map_err(compute)?;
            push_rows(&mut table, "riesz", &xi.name(), &r);
            let mut doc = report_json(&xi.name(), &r);
            let singleton = r
                .rows
                .iter()
                .filter(|row| row.partition_id == "singletons")
                .min_by(|a, b| a.margin.total_cmp(&b.margin));
            doc["singleton_witness"] = json!(singleton);
            members.push(doc);
            any |= r.pass;
        }
        summary["riesz"] = json!({ "selector": spec, "members": members, "any_pass": any });
        pass &= any;
    }
    summary["pass"] = json!(pass);
    run.table(&table)?;
    run.json("summary.json", &summary)?;
    Ok(Status::from_pass(pass))
}

/// A JSON description of a realization.
fn describe(v: &Value) -> Json {
    match v {
        Value::Scalar(r) => json!({ "kind": "scalar", "exact": r.to_string(), "value": r.to_f64() }),
        Value::Vector(x) => json!({ "kind": "vector", "entries": x }),
        Value::Pwc(f) => json!({ "kind": "pwc", "function": f }),
        Value::Shift(f) => json!({
            "kind": "shift",
            "constant": f.constant,
            "terms": f.terms.iter().map(|t| json!({
                "coef": t.coef,
                "function": t.base.label(),
                "start": t.start,
                "count": t.count,
            })).collect::<Vec<_>>(),
        }),
    }
}

pub fn realize(cfg: &ExperimentConfig, run: &mut Run) -> Result<Status, CliError> {
    let map = map_from_config(cfg)?;
    let mut ex = map.extract.clone().unwrap_or_else(|| ExtractConfig::new(0.1));
    if let Some(e) = cfg.realize.epsilon0 {
        ex.epsilon0 = e;
    }
    if let Some(m) = cfg.realize.m_cap {
        ex.m_cap = m;
    }
    if let Some(b) = &cfg.realize.battery {
        ex.battery = b.clone();
    }
    if let Some(seed) = cfg.seed {
        ex.battery.seed = seed;
    }
    ex.constants = cfg.realize.constants.or(map.constants);
    let scale = CofinalScale::new(cfg.dimension, cfg.scale.cap).map_err(compute)?;
    let family: Vec<Window> =
        (1..=64).map(|n| Window::cube(cfg.dimension, n)).collect::<Result<_, _>>().map_err(compute)?;
    let b = resolve_error(cfg.error.as_deref().unwrap_or("gallery"), &map, &family, &scale)?;

    let cert = match extract_realization(map.map.as_ref(), b.as_ref(), &ex) {
        Ok(c) => c,
        Err(e @ RealizationError::NoTileSide { .. }) => {
            run.json(
                "summary.json",
                &json!({
                    "map": map.name,
                    "status": "no-tile-side",
                    "reason": e.to_string(),
                    "epsilon0": ex.epsilon0,
                    "m_cap": ex.m_cap,
                    "constants": ex.constants,
                    "error_map": b.name(),
                    "pass": false,
                }),
            )?;
            return Ok(Status::Fail);
        }
        Err(e) => return Err(compute(e)),
    };

    let mut doc = serde_json::to_value(&cert).map_err(compute)?;
    doc["v"] = describe(&cert.v);
    doc["error_map"] = json!(b.name());
    if map.is_sampled() {
        doc["sampling"] = json!(map.map.space().sampling);
        doc["matrix_norm"] = json!("max absolute row sum");
    }
    run.json("certificate.json", &doc)?;

    // The residual sequence along the anchored boxes of the battery.
    let mut boxes: Vec<(usize, f64, String)> = cert
        .residuals
        .iter()
        .filter(|r| r.lo.iter().all(|&c| c == 0) && r.side.windows(2).all(|w| w[0] == w[1]))
        .map(|r| (r.side[0] as usize, r.residual, regime_json(&r.regime)))
        .collect();
    boxes.sort_by_key(|r| r.0);
    boxes.dedup_by_key(|r| r.0);
    let tails = tail_sups(&boxes.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>());
    let mut table = Table::new("realize", &["n", "residual", "tail_sup", "regime"])
        .note(format!("map: {}; v = φ([0,m)^d)/m^d with m = {}", map.name, cert.m))
        .note("n: side of the box F_n = [0,n)^d")
        .note("residual: ‖φ(F_n)/|F_n| − A_{F_n} v‖ in the value-space norm")
        .note("tail_sup: max of residual over the listed boxes with side ≥ n");
    for ((n, res, regime), (_, tail)) in boxes.into_iter().zip(tails) {
        table.push(vec![n.into(), res.into(), tail.into(), regime.into()]);
    }
    run.table(&table)?;
    let pass = cert.violations == 0;
    run.json(
        "summary.json",
        &json!({
            "map": map.name,
            "status": "extracted",
            "m": cert.m,
            "epsilon": cert.epsilon,
            "battery_windows": cert.residuals.len(),
            "invariant_windows": cert.invariant_windows,
            "violations": cert.violations,
            "pass": pass,
        }),
    )?;
    Ok(Status::from_pass(pass))
}

fn cocycle_from(matrices: &[[[f64; 2]; 2]]) -> Result<MatrixCocycle, CliError> {
    let c = match matrices {
        [a] => MatrixCocycle::from_rows(*a, *a),
        [a0, a1] => MatrixCocycle::from_rows(*a0, *a1),
        _ => return Err(CliError::Usage(format!("matrices: expected one or two 2×2 matrices, got {}", matrices.len()))),
    };
    c.map_err(|e| CliError::Usage(format!("matrices: {e}")))
}

pub fn lyapunov(cfg: &ExperimentConfig, run: &mut Run) -> Result<Status, CliError> {
    let c = cocycle_from(&cfg.lyapunov.matrices)?;
    let sampling = if c.is_constant() {
        ShiftSampling::default()
    } else {
        cfg.sampling(cfg.require_seed("the Lyapunov average of a non-constant cocycle")?)
    };
    let reference = c.is_constant().then(|| {
        let [row0, row1] = cfg.lyapunov.matrices[0];
        spectral_radius(&nalgebra::Matrix2::new(row0[0], row0[1], row1[0], row1[1])).ln()
    });
    let rows = lyapunov_schedule(&c, &cfg.lyapunov.schedule, &sampling);
    let mut table = Table::new("lyapunov", &["n", "estimate", "regime", "reference", "abs_error"])
        .note("estimate: f_n/n with f_n = log‖A_{x_{n-1}}⋯A_{x_0}‖ (max absolute row sum), nats per step")
        .note("reference: log spectral radius for a constant cocycle, empty otherwise");
    for r in &rows {
        let (refc, err) = match reference {
            Some(l) => (l.into(), (r.estimate - l).abs().into()),
            None => ("".into(), "".into()),
        };
        table.push(vec![r.n.into(), r.estimate.into(), r.regime.clone().into(), refc, err]);
    }
    run.table(&table)?;
    run.json(
        "summary.json",
        &json!({
            "matrices": cfg.lyapunov.matrices,
            "constant": c.is_constant(),
            "reference": reference,
            "last": rows.last().map(|r| json!({"n": r.n, "estimate": r.estimate})),
            "pass": true,
        }),
    )?;
    Ok(Status::Pass)
}

pub fn erdos(cfg: &ExperimentConfig, run: &mut Run) -> Result<Status, CliError> {
    let e = &cfg.erdos;
    let (seq, default_error): (Arc<dyn FunctionSequence>, ErrorSequence) = match &e.sequence {
        SequenceSpec::Cocycle => {
            let c = gallery_cocycle();
            let bound = c.constant_error_bound();
            (Arc::new(c), ErrorSequence::Constant { c: bound })
        }
        SequenceSpec::WeakGibbs => {
            (Arc::new(gallery_weak_gibbs()), ErrorSequence::Power { coef: 4.0, exponent: 0.5 })
        }
        SequenceSpec::Matrices { matrices } => {
            let c = cocycle_from(matrices)?;
            let bound = c.constant_error_bound();
            (Arc::new(c), ErrorSequence::Constant { c: bound })
        }
    };
    let cseq = e.error.clone().unwrap_or(default_error);
    let sampling = if e.sampled_n.is_empty() {
        cfg.sampling(0)
    } else {
        cfg.sampling(cfg.require_seed("erdos.sampled_n")?)
    };
    let opts = ErdosOptions {
        m_cap: e.m_cap,
        exhaustive_n: e.exhaustive_n,
        sampled_n: e.sampled_n.clone(),
        sampling,
        n_terms: ERDOS_TERMS,
    };
    let r = erdos_approximant(seq.as_ref(), &cseq, e.epsilon, &opts).map_err(compute)?;
    let mut table = Table::new("erdos", &["m", "K", "ctilde_m", "n", "lhs", "bound", "regime", "ok"])
        .note("lhs: ‖f_n − S_n f‖_∞ / n with f = f_m/m, nats per step")
        .note("bound: 5K/n + C̃_n/n + C̃_m/m (C̃ upper enclosures)");
    for row in &r.rows {
        table.push(vec![
            r.m.into(),
            r.k_const.into(),
            r.ctilde_m.into(),
            row.n.into(),
            row.lhs.into(),
            row.bound.into(),
            regime_json(&row.regime).into(),
            (row.lhs <= row.bound).into(),
        ]);
    }
    run.table(&table)?;
    let pass = r.violations == 0;
    run.json(
        "summary.json",
        &json!({
            "sequence": e.sequence,
            "error": cseq,
            "epsilon": r.epsilon,
            "m": r.m,
            "K": r.k_const,
            "ctilde_m": r.ctilde_m,
            "n0": r.n0,
            "violations": r.violations,
            "proved_range_violations": r.proved_range_violations,
            "pass": pass,
        }),
    )?;
    Ok(Status::from_pass(pass))
}

pub fn converge(cfg: &ExperimentConfig, run: &mut Run) -> Result<Status, CliError> {
    let c = &cfg.converge;
    let seed = cfg.require_seed("the pointwise experiment")?;
    let d = cfg.dimension;
    let sys = ShiftSystem::new(d, cfg.sampling.prob, seed, c.trials).map_err(|e| CliError::Usage(e.to_string()))?;
    let seq = match &cfg.folner {
        Some(s) => s.clone(),
        None => box_folner(d).map_err(compute)?,
    };
    let f = c.function.build(d)?;
    let r = pointwise_experiment(&f, &sys, &seq, &c.schedule).map_err(compute)?;
    let mut table = Table::new("converge", &["trial", "n", "average", "residual"])
        .note(format!("Bernoulli({}) shift on ℤ^{d}; seed {seed}", cfg.sampling.prob))
        .note("average: A_{F_n} f(ω) for the trial's configuration ω")
        .note(format!("residual: |average − ∫f dμ| with ∫f dμ = {:.16e}", r.mean));
    for row in &r.rows {
        table.push(vec![row.trial.into(), row.n.into(), row.average.into(), row.residual.into()]);
    }
    run.table(&table)?;
    let within = r.final_within();
    let pass = r.consistent && within * 100 >= 95 * r.trials;
    run.json(
        "quantiles.json",
        &json!({
            "mean": r.mean,
            "long_run_variance": r.long_run_variance,
            "trials": r.trials,
            "tolerance_rule": "3·sqrt(σ²_LR/|F_n|)",
            "quantiles": r.summary,
            "sample_mean": r.sample_mean,
            "sample_mean_tolerance": r.sample_mean_tolerance,
            "consistent": r.consistent,
            "final_within": within,
            "pass": pass,
        }),
    )?;
    Ok(Status::from_pass(pass))
}

pub fn gallery(_cfg: &ExperimentConfig, run: &mut Run) -> Result<Status, CliError> {
    let mut table = Table::new(
        "gallery",
        &["name", "dimension", "space", "b_sup", "phi_sup", "estimated", "realization", "m_cap", "description"],
    )
    .note("b_sup, phi_sup: |||b|||_sup and |||φ|||_sup in the value-space norm");
    let mut names = Vec::new();
    for name in gallery::NAMES {
        let e = gallery::entry(name, &ShiftSampling::default()).map_err(compute)?;
        table.push(vec![
            e.name.into(),
            e.map.dim().into(),
            format!("{:?}", e.map.space().kind).to_lowercase().into(),
            e.constants.b_sup.into(),
            e.constants.phi_sup.into(),
            e.constants.estimated.into(),
            e.realization.as_ref().map_or("none".to_string(), |v| v.kind().to_string()).into(),
            e.extract.m_cap.into(),
            e.description.into(),
        ]);
        names.push(e.name);
    }
    run.table(&table)?;
    run.json("summary.json", &json!({ "maps": names, "pass": true }))?;
    Ok(Status::Pass)
}
