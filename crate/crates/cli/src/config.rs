//! Experiment configuration: the JSON schema, command-line overrides, and
//! the parsers for map, error-map and Riesz error-map specs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use folnerlab::additivity::{
    budgeted_riesz_family, counterexample_error, counterexample_error_doubled, derive_error_from_realization, ConstantLift, ErrorMap, PartitionGen,
    RieszErrorMap, SizeErrorMap, SizeRieszMap,
};
use folnerlab::folner::{CofinalScale, FolnerSequence};
use folnerlab::gallery;
use folnerlab::lattice::{LatticePoint, Window};
use folnerlab::realization::{BatteryConfig, Constants, ExtractConfig};
use folnerlab::sequences::ErrorSequence;
use folnerlab::setmaps::{birkhoff_map, GroupAction, SetMap};
use folnerlab::values::shift::Cylinder;
use folnerlab::values::{PwcFunction, Real, ShiftSampling, SpaceKind, Value, ValueSpace};

use crate::CliError;

fn default_dimension() -> usize {
    1
}

/// Top-level experiment configuration. Every section is optional; unknown
/// keys anywhere are rejected.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub map: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub riesz_error: Option<String>,
    #[serde(default)]
    pub folner: Option<FolnerSequence>,
    #[serde(default)]
    pub tiling: TilingConfig,
    #[serde(default)]
    pub scale: ScaleConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub realize: RealizeConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub erdos: ErdosConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingConfig {
    /// Adds tiling partitions with tile side `m` to the certify generator.
    #[serde(default)]
    pub m: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub cap: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self { cap: folnerlab::folner::DEFAULT_LEVEL_CAP }
    }
}

/// Norm evaluation on `{0,1}^ℤ`; the seed comes from the top-level `seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub exhaustive_max: usize,
    pub samples: usize,
    pub prob: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let d = ShiftSampling::default();
        Self { exhaustive_max: d.exhaustive_max, samples: d.samples, prob: d.prob }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    /// Boxes `[0,n)^d` for `1 ≤ n ≤ max_side`.
    pub max_side: usize,
    /// Extra randomly translated boxes (seeded).
    #[serde(default)]
    pub random_windows: usize,
    /// Defaults to grid and singleton partitions, plus tiling partitions
    /// when `tiling.m` is set.
    #[serde(default)]
    pub partitions: Option<PartitionGen>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { max_side: 16, random_windows: 0, partitions: None }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizeConfig {
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub m_cap: Option<usize>,
    #[serde(default)]
    pub battery: Option<BatteryConfig>,
    /// Overrides the map's sup constants.
    #[serde(default)]
    pub constants: Option<Constants>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    /// One matrix (constant cocycle) or two (`A_0`, `A_1`), rows first.
    pub matrices: Vec<[[f64; 2]; 2]>,
    pub schedule: Vec<usize>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { matrices: vec![[[2.0, 1.0], [1.0, 1.0]]], schedule: (0..=10).map(|k| 1 << k).collect() }
    }
}

/// Sequences available to `erdos`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SequenceSpec {
    Cocycle,
    WeakGibbs,
    Matrices { matrices: Vec<[[f64; 2]; 2]> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErdosConfig {
    pub sequence: SequenceSpec,
    /// `C_n`; defaults to the cocycle's constant `log 2`.
    #[serde(default)]
    pub error: Option<ErrorSequence>,
    pub epsilon: f64,
    pub m_cap: usize,
    pub exhaustive_n: usize,
    pub sampled_n: Vec<usize>,
}

impl Default for ErdosConfig {
    fn default() -> Self {
        Self {
            sequence: SequenceSpec::Cocycle,
            error: None,
            epsilon: 0.5,
            m_cap: 64,
            exhaustive_n: 14,
            sampled_n: vec![16, 32, 64, 128, 256, 512],
        }
    }
}

/// Cylinder functions on the Bernoulli shift.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `x_0`.
    Coordinate,
    /// `Π_i x_{g_i}`.
    Monomial { coords: Vec<Vec<i64>> },
    /// Lookup table over the bits at `support` (first point is the least
    /// significant bit).
    Table { support: Vec<Vec<i64>>, table: Vec<f64> },
}

impl FunctionSpec {
    pub fn build(&self, dim: usize) -> Result<Cylinder, CliError> {
        let pts = |rows: &[Vec<i64>]| -> Result<Vec<LatticePoint>, CliError> {
            rows.iter()
                .map(|r| {
                    if r.len() != dim {
                        return Err(CliError::Usage(format!("converge.function: point {r:?} is not {dim}-dimensional")));
                    }
                    LatticePoint::new(r).map_err(|e| CliError::Usage(format!("converge.function: {e}")))
                })
                .collect()
        };
        let c = match self {
            FunctionSpec::Coordinate if dim == 1 => Ok(Cylinder::coordinate()),
            FunctionSpec::Coordinate => Cylinder::monomial(dim, vec![LatticePoint::ORIGIN]),
            FunctionSpec::Monomial { coords } => Cylinder::monomial(dim, pts(coords)?),
            FunctionSpec::Table { support, table } => Cylinder::new(dim, pts(support)?, table.clone()),
        };
        c.map_err(|e| CliError::Usage(format!("converge.function: {e}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub function: FunctionSpec,
    pub trials: usize,
    pub schedule: Vec<usize>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self { function: FunctionSpec::Coordinate, trials: 100, schedule: vec![10, 100, 1000, 10_000] }
    }
}

/// Reads a config file, reporting the JSON path of the first offending field.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { "top level".to_string() } else { format!("field `{path}`") };
        format!("{at}: {}", e.inner())
    })
}

impl ExperimentConfig {
    pub fn sampling(&self, seed: u64) -> ShiftSampling {
        ShiftSampling {
            exhaustive_max: self.sampling.exhaustive_max,
            samples: self.sampling.samples,
            seed,
            prob: self.sampling.prob,
        }
    }

    /// The seed, or a usage error naming what needed it.
    pub fn require_seed(&self, what: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Usage(format!("seed: {what} is sampled, so a seed is required (pass --seed N or set \"seed\")"))
        })
    }

    pub fn scale(&self) -> Result<CofinalScale, CliError> {
        CofinalScale::new(self.dimension, self.scale.cap).map_err(|e| CliError::Usage(format!("scale.cap: {e}")))
    }
}

/// Parses an exact real: an integer, `a/b`, or a decimal such as `0.125`.
/// Anything else that parses as a float is kept as a float.
pub fn parse_real(s: &str) -> Result<Real, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<i64>(), b.trim().parse::<i64>());
        return match (a, b) {
            (Ok(a), Ok(b)) if b != 0 => Ok(Real::ratio(a, b)),
            _ => Err(format!("`{s}` is not a fraction a/b with nonzero b")),
        };
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(Real::int(n));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if !frac.is_empty() && frac.len() <= 15 && frac.bytes().all(|c| c.is_ascii_digit()) {
            let neg = int.starts_with('-');
            let int_abs = int.trim_start_matches(['-', '+']);
            let int_abs = if int_abs.is_empty() { Ok(0) } else { int_abs.parse::<i64>() };
            if let Ok(i) = int_abs {
                let den = 10i64.pow(frac.len() as u32);
                let f: i64 = frac.parse().expect("digits");
                if let Some(num) = i.checked_mul(den).and_then(|x| x.checked_add(f)) {
                    return Ok(Real::ratio(if neg { -num } else { num }, den));
                }
            }
        }
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Real::float(x)),
        _ => Err(format!("`{s}` is not a number")),
    }
}

/// A resolved set map with the error map, constants and realization its
/// source supplies (gallery entries carry all of them).
pub struct MapSpec {
    pub name: String,
    pub map: Arc<dyn SetMap>,
    pub error: Option<Arc<dyn ErrorMap>>,
    pub constants: Option<Constants>,
    pub realization: Option<Value>,
    pub extract: Option<ExtractConfig>,
}

impl MapSpec {
    pub fn is_sampled(&self) -> bool {
        self.map.space().kind == SpaceKind::Shift
    }
}

/// `<gallery name>` or `birkhoff:const=<c>`.
pub fn resolve_map(spec: &str, dim: usize, sampling: &ShiftSampling) -> Result<MapSpec, CliError> {
    let usage = |m: String| CliError::Usage(format!("map `{spec}`: {m}"));
    if let Some(rest) = spec.strip_prefix("birkhoff:") {
        let c = rest.strip_prefix("const=").ok_or_else(|| usage("expected birkhoff:const=<c>".into()))?;
        let c = parse_real(c).map_err(usage)?;
        let v = Value::Scalar(c.clone());
        let phi_sup = c.to_f64().abs();
        return Ok(MapSpec {
            name: spec.to_string(),
            map: Arc::new(birkhoff_map(v.clone(), dim, ValueSpace::scalar(), GroupAction::Trivial)),
            error: Some(Arc::new(SizeErrorMap::constant(Real::zero()))),
            constants: Some(Constants { b_sup: 0.0, phi_sup, estimated: false }),
            realization: Some(v),
            extract: None,
        });
    }
    if dim != 1 {
        return Err(usage(format!("gallery maps live on ℤ, but dimension is {dim}")));
    }
    let e = gallery::entry(spec, sampling).map_err(|e| usage(e.to_string()))?;
    Ok(MapSpec {
        name: e.name.to_string(),
        map: e.map,
        error: Some(e.error),
        constants: Some(e.constants),
        realization: e.realization,
        extract: Some(e.extract),
    })
}

/// `zero`, `const=<c>`, `sqrt=<c>` (`c√|F|`), `counterexample`
/// (`1 + n/log(1+n)`), `counterexample-doubled` (`1 + 2n/log(1+n)`), `gallery`
/// (the map's own error map) or `derived` (from the map's realization over
/// `family`).
pub fn resolve_error(
    spec: &str,
    map: &MapSpec,
    family: &[Window],
    scale: &CofinalScale,
) -> Result<Arc<dyn ErrorMap>, CliError> {
    let usage = |m: String| CliError::Usage(format!("error map `{spec}`: {m}"));
    let b: Arc<dyn ErrorMap> = match spec {
        "zero" => Arc::new(SizeErrorMap::constant(Real::zero())),
        "counterexample" => Arc::new(counterexample_error()),
        "counterexample-doubled" => Arc::new(counterexample_error_doubled()),
        "gallery" => map.error.clone().ok_or_else(|| usage(format!("map `{}` has no error map", map.name)))?,
        "derived" => {
            let v = map.realization.as_ref().ok_or_else(|| usage(format!("map `{}` has no realization", map.name)))?;
            Arc::new(
                derive_error_from_realization(map.map.as_ref(), v, family, scale, scale.cap)
                    .map_err(|e| usage(e.to_string()))?,
            )
        }
        _ => {
            if let Some(c) = spec.strip_prefix("const=") {
                Arc::new(SizeErrorMap::constant(parse_real(c).map_err(usage)?))
            } else if let Some(c) = spec.strip_prefix("sqrt=") {
                let c = parse_real(c).map_err(usage)?.to_f64();
                Arc::new(SizeErrorMap::new(format!("{c}*sqrt(n)"), move |n| Real::float(c * (n as f64).sqrt())))
            } else {
                return Err(usage("expected zero, const=<c>, sqrt=<c>, counterexample, counterexample-doubled, gallery or derived".into()));
            }
        }
    };
    Ok(b)
}

/// `‖ξ({0})‖` for members of the counterexample family, used by `l1budget`.
fn unit_norm(xi: &dyn RieszErrorMap, space: &ValueSpace) -> Result<f64, CliError> {
    let one = Window::singleton(1, LatticePoint::ORIGIN).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(space.norm(&xi.eval(&one)))
}

/// `zero`, `spike=<c>` (`|E| c 𝟙`), `lift` (`b(E)·𝟙` for the error map),
/// `budgeted` (the counterexample family) or `l1budget=<B>` (family members
/// with `‖ξ({0})‖ ≤ B`).
pub fn resolve_riesz(
    spec: &str,
    map: &MapSpec,
    error: Option<Arc<dyn ErrorMap>>,
) -> Result<Vec<Arc<dyn RieszErrorMap>>, CliError> {
    let usage = |m: String| CliError::Usage(format!("Riesz error map `{spec}`: {m}"));
    let space = map.map.space();
    let kind = space.kind;
    let unit = move |c: Real| -> Result<Value, CliError> {
        Ok(match kind {
            SpaceKind::Scalar => Value::Scalar(c),
            SpaceKind::Pwc => Value::Pwc(PwcFunction::constant(c)),
            SpaceKind::Shift => Value::Shift(folnerlab::values::ShiftFn::constant(c.to_f64())),
            SpaceKind::Vector(_) => return Err(CliError::Usage("vector values carry no lattice order".into())),
        })
    };
    Ok(match spec {
        "zero" => {
            let z = space.zero();
            vec![Arc::new(SizeRieszMap::new("zero", move |_| z.clone()))]
        }
        "lift" => {
            let b = error.ok_or_else(|| usage("needs an error map (--error)".into()))?;
            vec![Arc::new(ConstantLift { b, kind })]
        }
        "budgeted" => budgeted_riesz_family(),
        _ => {
            if let Some(c) = spec.strip_prefix("spike=") {
                let c = parse_real(c).map_err(usage)?;
                let base = unit(c)?;
                let name = format!("spike({spec})");
                vec![Arc::new(SizeRieszMap::new(name, move |n| base.scale_real(&Real::int(n as i64))))]
            } else if let Some(b) = spec.strip_prefix("l1budget=") {
                let budget = parse_real(b).map_err(usage)?.to_f64();
                let pwc = ValueSpace::pwc(1.0);
                let mut out = Vec::new();
                for xi in budgeted_riesz_family() {
                    if unit_norm(xi.as_ref(), &pwc)? <= budget {
                        out.push(xi);
                    }
                }
                if out.is_empty() {
                    return Err(usage(format!("no family member has ‖ξ({{0}})‖₁ ≤ {budget}")));
                }
                out
            } else {
                return Err(usage("expected zero, spike=<c>, lift, budgeted or l1budget=<B>".into()));
            }
        }
    })
}
