//! Pipeline configuration shared by every stage.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Result};

/// How the Gaussian bandwidth of the affinity kernel is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaStrategy {
    /// Mean distance to the `ceil(k/2)`-th neighbor over all instances.
    GlobalMeanKnn,
    Fixed(f64),
}

/// Regularizer matrix `E` of the diffusion objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Identity,
    /// Symmetrized normalized affinity of the reference (factor 1) graph.
    ReferenceGraph,
}

/// Inner solver used to update the similarity matrix with fixed weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    FixedPoint,
    ConjugateGradient,
}

/// Local region inside which a single transition hop may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopRegion {
    ReciprocalK1,
    KnnK2,
}

/// Every tunable of the pipeline. `None` for `lambda`, `epsilon` and
/// `rerank_depth` means "derive from data" / "no truncation".
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub scale_factors: Vec<f64>,
    pub sigma: SigmaStrategy,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub maxiter: usize,
    pub inner_iters: usize,
    pub inner_solver: InnerSolver,
    pub delta: f64,
    pub outer_tol: f64,
    pub regularizer: Regularizer,
    pub k1: usize,
    pub k2: usize,
    pub kappa: f64,
    pub theta: f64,
    pub gamma: f64,
    pub epsilon: Option<f64>,
    pub sinkhorn_tol: f64,
    pub sinkhorn_maxiter: usize,
    pub rerank_depth: Option<usize>,
    pub hop_region: HopRegion,
    /// Transport only the non-shared mass between distributions. Used only
    /// when `gamma <= 1`, where the ground cost is a metric.
    pub excess_transport: bool,
    pub normalize_blend: bool,
    pub l2_normalize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 10,
            scale_factors: vec![
                std::f64::consts::FRAC_1_SQRT_2,
                1.0,
                std::f64::consts::SQRT_2,
            ],
            sigma: SigmaStrategy::GlobalMeanKnn,
            mu: 0.0101,
            lambda: None,
            maxiter: 30,
            inner_iters: 3,
            inner_solver: InnerSolver::FixedPoint,
            delta: 1e-6,
            outer_tol: 1e-6,
            regularizer: Regularizer::Identity,
            k1: 60,
            k2: 7,
            kappa: 2.0,
            theta: 0.5,
            gamma: 1.0,
            epsilon: None,
            sinkhorn_tol: 1e-9,
            sinkhorn_maxiter: 10_000,
            rerank_depth: None,
            hop_region: HopRegion::ReciprocalK1,
            excess_transport: true,
            normalize_blend: false,
            l2_normalize: false,
        }
    }
}

/// Names accepted by [`PipelineConfig::set`], in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "k",
    "scale_factors",
    "sigma",
    "mu",
    "lambda",
    "maxiter",
    "inner_iters",
    "inner_solver",
    "delta",
    "outer_tol",
    "regularizer",
    "k1",
    "k2",
    "kappa",
    "theta",
    "gamma",
    "epsilon",
    "sinkhorn_tol",
    "sinkhorn_maxiter",
    "rerank_depth",
    "hop_region",
    "excess_transport",
    "normalize_blend",
    "l2_normalize",
];

impl PipelineConfig {
    /// Checks that do not depend on the dataset size.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if self.scale_factors.is_empty()
            || self
                .scale_factors
                .iter()
                .any(|f| !(*f > 0.0 && f.is_finite()))
        {
            return Err(invalid(
                "scale_factors",
                "need at least one positive factor",
            ));
        }
        if let SigmaStrategy::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(
                    "sigma",
                    format!("fixed bandwidth must be positive, got {s}"),
                ));
            }
        }
        positive("mu", self.mu)?;
        if let Some(l) = self.lambda {
            positive("lambda", l)?;
        }
        if self.inner_iters == 0 {
            return Err(invalid("inner_iters", "must be at least 1"));
        }
        positive("delta", self.delta)?;
        positive("outer_tol", self.outer_tol)?;
        if self.k2 == 0 || self.k2 >= self.k1 {
            return Err(invalid(
                "k2",
                format!("need 1 <= k2 < k1, got k2 = {}, k1 = {}", self.k2, self.k1),
            ));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(invalid("kappa", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        positive("gamma", self.gamma)?;
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        positive("sinkhorn_tol", self.sinkhorn_tol)?;
        if self.sinkhorn_maxiter == 0 {
            return Err(invalid("sinkhorn_maxiter", "must be at least 1"));
        }
        if self.rerank_depth == Some(0) {
            return Err(invalid(
                "rerank_depth",
                "must be at least 1 (use `all` to disable truncation)",
            ));
        }
        Ok(())
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "k" => self.k = parse("k", v)?,
            "scale_factors" => {
                self.scale_factors = v
                    .split(',')
                    .map(|s| parse::<f64>("scale_factors", s.trim()))
                    .collect::<Result<_>>()?
            }
            "sigma" => self.sigma = v.parse()?,
            "mu" => self.mu = parse("mu", v)?,
            "lambda" => self.lambda = parse_auto("lambda", v)?,
            "maxiter" => self.maxiter = parse("maxiter", v)?,
            "inner_iters" => self.inner_iters = parse("inner_iters", v)?,
            "inner_solver" => self.inner_solver = v.parse()?,
            "delta" => self.delta = parse("delta", v)?,
            "outer_tol" => self.outer_tol = parse("outer_tol", v)?,
            "regularizer" => self.regularizer = v.parse()?,
            "k1" => self.k1 = parse("k1", v)?,
            "k2" => self.k2 = parse("k2", v)?,
            "kappa" => self.kappa = parse("kappa", v)?,
            "theta" => self.theta = parse("theta", v)?,
            "gamma" => self.gamma = parse("gamma", v)?,
            "epsilon" => self.epsilon = parse_auto("epsilon", v)?,
            "sinkhorn_tol" => self.sinkhorn_tol = parse("sinkhorn_tol", v)?,
            "sinkhorn_maxiter" => self.sinkhorn_maxiter = parse("sinkhorn_maxiter", v)?,
            "rerank_depth" => {
                self.rerank_depth = if v == "all" {
                    None
                } else {
                    Some(parse("rerank_depth", v)?)
                }
            }
            "hop_region" => self.hop_region = v.parse()?,
            "excess_transport" => self.excess_transport = parse("excess_transport", v)?,
            "normalize_blend" => self.normalize_blend = parse("normalize_blend", v)?,
            "l2_normalize" => self.l2_normalize = parse("l2_normalize", v)?,
            _ => return Err(invalid("config", format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Textual value of one field, in the form accepted by [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "k" => self.k.to_string(),
            "scale_factors" => self
                .scale_factors
                .iter()
                .map(|f| format!("{f:?}"))
                .collect::<Vec<_>>()
                .join(","),
            "sigma" => self.sigma.to_string(),
            "mu" => format!("{:?}", self.mu),
            "lambda" => auto_str(self.lambda),
            "maxiter" => self.maxiter.to_string(),
            "inner_iters" => self.inner_iters.to_string(),
            "inner_solver" => self.inner_solver.to_string(),
            "delta" => format!("{:?}", self.delta),
            "outer_tol" => format!("{:?}", self.outer_tol),
            "regularizer" => self.regularizer.to_string(),
            "k1" => self.k1.to_string(),
            "k2" => self.k2.to_string(),
            "kappa" => format!("{:?}", self.kappa),
            "theta" => format!("{:?}", self.theta),
            "gamma" => format!("{:?}", self.gamma),
            "epsilon" => auto_str(self.epsilon),
            "sinkhorn_tol" => format!("{:?}", self.sinkhorn_tol),
            "sinkhorn_maxiter" => self.sinkhorn_maxiter.to_string(),
            "rerank_depth" => self
                .rerank_depth
                .map_or_else(|| "all".to_string(), |d| d.to_string()),
            "hop_region" => self.hop_region.to_string(),
            "excess_transport" => self.excess_transport.to_string(),
            "normalize_blend" => self.normalize_blend.to_string(),
            "l2_normalize" => self.l2_normalize.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// `key=value` lines for every field.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        CONFIG_KEYS
            .iter()
            .map(|k| (*k, self.get(k).expect("every listed key has a value")))
            .collect()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn parse<T: FromStr>(name: &'static str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| invalid(name, format!("cannot parse `{v}`: {e}")))
}

fn parse_auto(name: &'static str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse(name, v).map(Some)
    }
}

fn auto_str(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| format!("{x:?}"))
}

impl fmt::Display for SigmaStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GlobalMeanKnn => f.write_str("global-mean-knn"),
            Self::Fixed(s) => write!(f, "{s:?}"),
        }
    }
}

impl FromStr for SigmaStrategy {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-mean-knn" | "auto" => Ok(Self::GlobalMeanKnn),
            other => parse("sigma", other.strip_prefix("fixed:").unwrap_or(other)).map(Self::Fixed),
        }
    }
}

macro_rules! keyword_enum {
    ($ty:ident, $name:literal, $($variant:ident => $text:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = crate::Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(invalid($name, format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

keyword_enum!(Regularizer, "regularizer", Identity => "identity", ReferenceGraph => "reference-graph");
keyword_enum!(InnerSolver, "inner_solver", FixedPoint => "fixed-point", ConjugateGradient => "cg");
keyword_enum!(HopRegion, "hop_region", ReciprocalK1 => "reciprocal-k1", KnnK2 => "knn-k2");
