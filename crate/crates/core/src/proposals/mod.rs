//! Conditional proposals `q(x; cond)`: an MLP conditioner emitting the
//! parameters of a parametric family or a radial-flow stack.
//!
//! Every conditioner output slot maps to a natural parameter through
//! `value = shift + scale * head(pre)`. Shifts, scales and the initial
//! output bias are chosen from a reference parameter vector so that an
//! untrained proposal starts at that reference.

mod flow;
mod mixture;

pub use flow::{constrained_beta, RadialFlow, RadialLayer};
pub use mixture::MixtureProposal;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{Activation, Head, Mlp, NnError, Tape, Var};
use crate::prob::{Density, DensityError, Distribution, ProbError, RngStream, LN_2PI};
use flow::LayerVars;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("conditioner produced non-finite parameters for cond {cond:?}")]
    Degenerate { cond: Vec<f64> },
    #[error("conditioning input has length {got}, expected {expected}")]
    CondShape { expected: usize, got: usize },
    #[error("point has length {got}, expected {expected}")]
    PointShape { expected: usize, got: usize },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid proposal specification: {0}")]
    Spec(String),
}

impl From<ProbError> for ProposalError {
    fn from(e: ProbError) -> Self {
        ProposalError::Density(e.into())
    }
}

/// Output family of a conditional proposal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Family {
    DiagonalGaussian { dim: usize },
    HalfNormal { dim: usize },
    Gamma,
    Beta,
    /// Radial layers on a standard normal base; `affine` appends a
    /// conditioned elementwise location-scale map.
    RadialFlow { dim: usize, layers: usize, affine: bool },
    /// Independent families on consecutive coordinates.
    Product(Vec<Family>),
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::DiagonalGaussian { dim } | Family::HalfNormal { dim } | Family::RadialFlow { dim, .. } => *dim,
            Family::Gamma | Family::Beta => 1,
            Family::Product(parts) => parts.iter().map(Family::dim).sum(),
        }
    }

    /// Output heads, one per conditioner slot.
    pub fn heads(&self) -> Vec<Head> {
        match self {
            Family::DiagonalGaussian { dim } | Family::HalfNormal { dim } => {
                let mut h = vec![Head::Identity; *dim];
                h.extend(vec![Head::Softplus; *dim]);
                h
            }
            Family::Gamma => vec![Head::Softplus, Head::Softplus],
            Family::Beta => vec![Head::Sigmoid, Head::Softplus],
            Family::RadialFlow { dim, layers, affine } => {
                let mut h = Vec::new();
                for _ in 0..*layers {
                    h.extend(vec![Head::Identity; *dim]);
                    h.extend([Head::Softplus, Head::Softplus]);
                }
                if *affine {
                    h.extend(vec![Head::Identity; *dim]);
                    h.extend(vec![Head::Softplus; *dim]);
                }
                h
            }
            Family::Product(parts) => parts.iter().flat_map(Family::heads).collect(),
        }
    }

    pub fn n_slots(&self) -> usize {
        self.heads().len()
    }

    /// Natural-parameter reference used at initialization: standard
    /// normal locations and unit scales, Gamma(mean 1, shape 1),
    /// Beta(mean 1/2, concentration 2), identity flows.
    pub fn default_reference(&self) -> Vec<f64> {
        match self {
            Family::DiagonalGaussian { dim } | Family::HalfNormal { dim } => {
                let mut r = vec![0.0; *dim];
                r.extend(vec![1.0; *dim]);
                r
            }
            Family::Gamma => vec![1.0, 1.0],
            Family::Beta => vec![0.5, 2.0],
            Family::RadialFlow { dim, layers, affine } => {
                let mut r = Vec::new();
                for _ in 0..*layers {
                    r.extend(vec![0.0; *dim]);
                    r.extend([1.0, 1.0]);
                }
                if *affine {
                    r.extend(vec![0.0; *dim]);
                    r.extend(vec![1.0; *dim]);
                }
                r
            }
            Family::Product(parts) => parts.iter().flat_map(Family::default_reference).collect(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::DiagonalGaussian { dim } => write!(f, "gaussian({dim})"),
            Family::HalfNormal { dim } => write!(f, "halfnormal({dim})"),
            Family::Gamma => write!(f, "gamma"),
            Family::Beta => write!(f, "beta"),
            Family::RadialFlow { dim, layers, affine: false } => write!(f, "flow({dim},{layers})"),
            Family::RadialFlow { dim, layers, affine: true } => write!(f, "flow({dim},{layers},affine)"),
            Family::Product(parts) => {
                write!(f, "product(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let (mut depth, mut start, mut out) = (0i32, 0, Vec::new());
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

impl FromStr for Family {
    type Err = ProposalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ProposalError::Spec(format!("unrecognized family `{s}`"));
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], split_top_level(&s[i + 1..s.len() - 1])),
            None => (s, Vec::new()),
            _ => return Err(bad()),
        };
        let num = |k: usize| -> Result<usize, ProposalError> {
            args.get(k).and_then(|a| a.parse().ok()).filter(|v| *v > 0).ok_or_else(bad)
        };
        match (name, args.len()) {
            ("gaussian", 1) => Ok(Family::DiagonalGaussian { dim: num(0)? }),
            ("halfnormal", 1) => Ok(Family::HalfNormal { dim: num(0)? }),
            ("gamma", 0) => Ok(Family::Gamma),
            ("beta", 0) => Ok(Family::Beta),
            ("flow", 2) => Ok(Family::RadialFlow { dim: num(0)?, layers: num(1)?, affine: false }),
            ("flow", 3) if args[2] == "affine" => Ok(Family::RadialFlow { dim: num(0)?, layers: num(1)?, affine: true }),
            ("product", n) if n > 0 => Ok(Family::Product(args.iter().map(|a| a.parse()).collect::<Result<_, _>>()?)),
            _ => Err(bad()),
        }
    }
}

/// A proposal with its parameters evaluated at one conditioning input.
#[derive(Clone, Debug)]
pub enum Conditioned {
    Parametric(Density),
    Flow(RadialFlow),
    Product(Vec<Conditioned>),
}

impl Distribution for Conditioned {
    fn dim(&self) -> usize {
        match self {
            Conditioned::Parametric(d) => d.dim(),
            Conditioned::Flow(f) => f.dim(),
            Conditioned::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> f64 {
        match self {
            Conditioned::Parametric(d) => Distribution::sample_into(d, rng, out),
            Conditioned::Flow(f) => f.sample_into(rng, out),
            Conditioned::Product(parts) => {
                let mut at = 0;
                let mut lp = 0.0;
                for p in parts {
                    let n = p.dim();
                    lp += p.sample_into(rng, &mut out[at..at + n]);
                    at += n;
                }
                lp
            }
        }
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, DensityError> {
        if x.len() != self.dim() {
            return Err(ProbError::DimensionMismatch { expected: self.dim(), got: x.len() }.into());
        }
        match self {
            Conditioned::Parametric(d) => Ok(d.log_pdf(x)?),
            Conditioned::Flow(f) => f.log_density(x),
            Conditioned::Product(parts) => {
                let mut at = 0;
                let mut lp = 0.0;
                for p in parts {
                    let n = p.dim();
                    lp += p.log_density(&x[at..at + n])?;
                    at += n;
                }
                Ok(lp)
            }
        }
    }
}

fn build_conditioned(family: &Family, v: &[f64]) -> Result<Conditioned, ProbError> {
    Ok(match family {
        Family::DiagonalGaussian { dim } => Conditioned::Parametric(Density::diag_normal(v[..*dim].to_vec(), v[*dim..2 * dim].to_vec())?),
        Family::HalfNormal { dim } => Conditioned::Parametric(Density::half_normal(v[..*dim].to_vec(), v[*dim..2 * dim].to_vec())?),
        Family::Gamma => Conditioned::Parametric(Density::gamma(v[1], v[0] / v[1])?),
        Family::Beta => Conditioned::Parametric(Density::beta(v[0] * v[1], (1.0 - v[0]) * v[1])?),
        Family::RadialFlow { dim, layers, affine } => {
            let d = *dim;
            let stride = d + 2;
            let mut flow = RadialFlow::identity(d, *layers);
            for (k, layer) in flow.layers.iter_mut().enumerate() {
                let s = &v[k * stride..(k + 1) * stride];
                layer.center = s[..d].to_vec();
                layer.alpha = s[d];
                layer.beta = s[d + 1] - s[d];
            }
            if *affine {
                let at = layers * stride;
                flow.loc = v[at..at + d].to_vec();
                flow.scale = v[at + d..at + 2 * d].to_vec();
            }
            if flow.scale.iter().any(|s| !(*s > 0.0)) || flow.layers.iter().any(|l| !(l.alpha > 0.0)) {
                return Err(ProbError::InvalidParameter { family: "radial flow", reason: "non-positive scale".into() });
            }
            Conditioned::Flow(flow)
        }
        Family::Product(parts) => {
            let mut at = 0;
            let mut out = Vec::with_capacity(parts.len());
            for p in parts {
                let n = p.n_slots();
                out.push(build_conditioned(p, &v[at..at + n])?);
                at += n;
            }
            Conditioned::Product(out)
        }
    })
}

/// Records `log q(x)` for a family whose slot values are `v` on the tape.
fn tape_family_log_density(tape: &mut Tape, family: &Family, v: Var, x: &[f64]) -> Result<Var, ProposalError> {
    Ok(match family {
        Family::DiagonalGaussian { dim } | Family::HalfNormal { dim } => {
            let d = *dim;
            let loc = tape.slice(v, 0, d)?;
            let sd = tape.slice(v, d, d)?;
            let half = matches!(family, Family::HalfNormal { .. });
            if half && x.iter().zip(tape.value(loc)).any(|(xi, li)| !(xi >= li)) {
                return Ok(tape.constant(f64::NEG_INFINITY));
            }
            let xl = tape.leaf(x);
            let diff = tape.sub(xl, loc)?;
            let zs = tape.div(diff, sd)?;
            let sq = tape.square(zs);
            let quad = tape.sum(sq);
            let quad = tape.scale(quad, -0.5);
            let lsd = tape.ln(sd);
            let lsd = tape.sum(lsd);
            let lp = tape.sub(quad, lsd)?;
            let c = -0.5 * LN_2PI * d as f64 + if half { std::f64::consts::LN_2 * d as f64 } else { 0.0 };
            tape.offset(lp, c)
        }
        Family::Gamma => {
            let xv = x[0];
            if !(xv > 0.0) {
                return Ok(tape.constant(f64::NEG_INFINITY));
            }
            let mean = tape.index(v, 0)?;
            let shape = tape.index(v, 1)?;
            let lx = xv.ln();
            // (k-1) ln x - x k / m - lgamma(k) - k (ln m - ln k)
            let t1 = tape.offset(shape, -1.0);
            let t1 = tape.scale(t1, lx);
            let km = tape.div(shape, mean)?;
            let t2 = tape.scale(km, -xv);
            let t3 = tape.lgamma(shape);
            let lm = tape.ln(mean);
            let lk = tape.ln(shape);
            let lratio = tape.sub(lm, lk)?;
            let t4 = tape.mul(shape, lratio)?;
            let a = tape.add(t1, t2)?;
            let b = tape.add(t3, t4)?;
            tape.sub(a, b)?
        }
        Family::Beta => {
            let xv = x[0];
            if !(xv > 0.0 && xv < 1.0) {
                return Ok(tape.constant(f64::NEG_INFINITY));
            }
            let mean = tape.index(v, 0)?;
            let conc = tape.index(v, 1)?;
            let a = tape.mul(mean, conc)?;
            let b = tape.sub(conc, a)?;
            let t1 = tape.offset(a, -1.0);
            let t1 = tape.scale(t1, xv.ln());
            let t2 = tape.offset(b, -1.0);
            let t2 = tape.scale(t2, (-xv).ln_1p());
            let la = tape.lgamma(a);
            let lb = tape.lgamma(b);
            let lc = tape.lgamma(conc);
            let s = tape.add(t1, t2)?;
            let s = tape.sub(s, la)?;
            let s = tape.sub(s, lb)?;
            tape.add(s, lc)?
        }
        Family::RadialFlow { dim, layers, affine } => {
            let d = *dim;
            let stride = d + 2;
            let flow = match build_conditioned(family, tape.value(v))? {
                Conditioned::Flow(f) => f,
                _ => unreachable!(),
            };
            let xl = tape.leaf(x);
            let (mut cur, mut log_det) = if *affine {
                let at = layers * stride;
                let loc = tape.slice(v, at, d)?;
                let scale = tape.slice(v, at + d, d)?;
                let diff = tape.sub(xl, loc)?;
                let u = tape.div(diff, scale)?;
                let ls = tape.ln(scale);
                (u, tape.sum(ls))
            } else {
                (xl, tape.constant(0.0))
            };
            if tape.value(cur).iter().any(|c| !c.is_finite()) {
                return Ok(tape.constant(f64::NEG_INFINITY));
            }
            for k in (0..*layers).rev() {
                let center = tape.slice(v, k * stride, d)?;
                let alpha = tape.index(v, k * stride + d)?;
                let s = tape.index(v, k * stride + d + 1)?;
                let beta = tape.sub(s, alpha)?;
                let vars = LayerVars { center, alpha, beta };
                let z = flow::tape_inverse(tape, cur, &vars, &flow.layers[k])?;
                let ld = flow::tape_log_det(tape, z, &vars, d)?;
                log_det = tape.add(log_det, ld)?;
                cur = z;
            }
            let base = flow::tape_base_log_pdf(tape, cur);
            tape.sub(base, log_det)?
        }
        Family::Product(parts) => {
            let mut at_slot = 0;
            let mut at_x = 0;
            let mut total = tape.constant(0.0);
            for p in parts {
                let (n, dx) = (p.n_slots(), p.dim());
                let sub = tape.slice(v, at_slot, n)?;
                let lp = tape_family_log_density(tape, p, sub, &x[at_x..at_x + dx])?;
                total = tape.add(total, lp)?;
                at_slot += n;
                at_x += dx;
            }
            total
        }
    })
}

/// Affine standardization of conditioning inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer { shift: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Per-coordinate mean and standard deviation of `rows`; constant
    /// coordinates keep unit scale.
    pub fn fit(rows: &[Vec<f64>], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut shift = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                shift[i] += r[i] / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                var[i] += (r[i] - shift[i]).powi(2) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 0.0 && v.is_finite() { v.sqrt() } else { 1.0 }).collect();
        Normalizer { shift, scale }
    }

    pub fn apply(&self, cond: &[f64]) -> Vec<f64> {
        cond.iter().enumerate().map(|(i, c)| (c - self.shift[i]) / self.scale[i]).collect()
    }
}

/// Architecture of a conditioner network.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionerSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct ConditionalProposal {
    family: Family,
    cond_dim: usize,
    net: Mlp,
    slot_shift: Vec<f64>,
    slot_scale: Vec<f64>,
    normalizer: Normalizer,
}

impl ConditionalProposal {
    /// Random conditioner whose output starts near `reference` (natural
    /// slot values, see [`Family::default_reference`]).
    pub fn new(
        family: Family,
        cond_dim: usize,
        spec: &ConditionerSpec,
        reference: &[f64],
        rng: &mut RngStream,
    ) -> Result<Self, ProposalError> {
        let heads = family.heads();
        if reference.len() != heads.len() {
            return Err(ProposalError::Spec(format!("reference has {} values, family needs {}", reference.len(), heads.len())));
        }
        let mut sizes = vec![cond_dim.max(1)];
        sizes.extend(&spec.hidden);
        sizes.push(heads.len());
        let mut net = Mlp::new(&sizes, spec.activation, &heads, rng)?;
        net.scale_output_weights(0.1);
        let mut shift = vec![0.0; heads.len()];
        let mut scale = vec![1.0; heads.len()];
        let mut bias = vec![0.0; heads.len()];
        for (i, (h, r)) in heads.iter().zip(reference).enumerate() {
            match h {
                Head::Identity => shift[i] = *r,
                Head::Softplus => {
                    if !(*r > 0.0) {
                        return Err(ProposalError::Spec(format!("softplus slot {i} needs a positive reference, got {r}")));
                    }
                    scale[i] = r / std::f64::consts::LN_2;
                }
                Head::Sigmoid => {
                    if !(*r > 0.0 && *r < 1.0) {
                        return Err(ProposalError::Spec(format!("sigmoid slot {i} needs a reference in (0,1), got {r}")));
                    }
                    bias[i] = (r / (1.0 - r)).ln();
                }
            }
        }
        net.set_output_bias(&bias)?;
        Ok(ConditionalProposal { family, cond_dim, net, slot_shift: shift, slot_scale: scale, normalizer: Normalizer::identity(cond_dim) })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<(), ProposalError> {
        if normalizer.shift.len() != self.cond_dim || normalizer.scale.len() != self.cond_dim {
            return Err(ProposalError::CondShape { expected: self.cond_dim, got: normalizer.shift.len() });
        }
        self.normalizer = normalizer;
        Ok(())
    }

    fn net_input(&self, cond: &[f64]) -> Result<Vec<f64>, ProposalError> {
        if cond.len() != self.cond_dim {
            return Err(ProposalError::CondShape { expected: self.cond_dim, got: cond.len() });
        }
        // An empty conditioning slot feeds a single constant input.
        Ok(if self.cond_dim == 0 { vec![0.0] } else { self.normalizer.apply(cond) })
    }

    /// Natural parameter values emitted for `cond`.
    pub fn slot_values(&self, cond: &[f64]) -> Result<Vec<f64>, ProposalError> {
        let input = self.net_input(cond)?;
        let out = self.net.forward_values(&input)?;
        let v: Vec<f64> = out.iter().enumerate().map(|(i, o)| self.slot_shift[i] + self.slot_scale[i] * o).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ProposalError::Degenerate { cond: cond.to_vec() });
        }
        Ok(v)
    }

    pub fn condition(&self, cond: &[f64]) -> Result<Conditioned, ProposalError> {
        let v = self.slot_values(cond)?;
        build_conditioned(&self.family, &v).map_err(|_| ProposalError::Degenerate { cond: cond.to_vec() })
    }

    pub fn sample(&self, cond: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, f64), ProposalError> {
        Ok(self.condition(cond)?.sample(rng))
    }

    pub fn log_density(&self, x: &[f64], cond: &[f64]) -> Result<f64, ProposalError> {
        if x.len() != self.dim() {
            return Err(ProposalError::PointShape { expected: self.dim(), got: x.len() });
        }
        Ok(self.condition(cond)?.log_density(x)?)
    }

    /// Records `log q(x; cond)` on a tape created over `self.params()`.
    pub fn tape_log_density(&self, tape: &mut Tape, x: &[f64], cond: &[f64]) -> Result<Var, ProposalError> {
        if x.len() != self.dim() {
            return Err(ProposalError::PointShape { expected: self.dim(), got: x.len() });
        }
        let input = self.net_input(cond)?;
        let inp = tape.leaf(&input);
        let h = self.net.forward(tape, inp, 0)?;
        let sc = tape.leaf(&self.slot_scale);
        let sh = tape.leaf(&self.slot_shift);
        let v = tape.mul(h, sc)?;
        let v = tape.add(v, sh)?;
        if tape.value(v).iter().any(|x| !x.is_finite()) {
            return Err(ProposalError::Degenerate { cond: cond.to_vec() });
        }
        tape_family_log_density(tape, &self.family, v, x)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "conditional-proposal");
        ck.set_meta("family", &self.family);
        ck.set_meta("cond_dim", self.cond_dim);
        if let Family::RadialFlow { layers, .. } = &self.family {
            ck.set_meta("flow_layers", layers);
        }
        let hidden: Vec<String> = self.net.sizes()[1..self.net.sizes().len() - 1].iter().map(|s| s.to_string()).collect();
        ck.set_meta("hidden", hidden.join(","));
        ck.set_meta(
            "activation",
            match self.net.activation() {
                Activation::Tanh => "tanh",
                Activation::Relu => "relu",
            },
        );
        ck.push_array("params", self.net.params());
        ck.push_array("slot_shift", &self.slot_shift);
        ck.push_array("slot_scale", &self.slot_scale);
        ck.push_array("norm_shift", &self.normalizer.shift);
        ck.push_array("norm_scale", &self.normalizer.scale);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ProposalError> {
        if ck.meta("kind")? != "conditional-proposal" {
            return Err(ProposalError::Spec("checkpoint does not hold a conditional proposal".into()));
        }
        let family: Family = ck.meta("family")?.parse()?;
        let cond_dim: usize = ck.meta_parse("cond_dim")?;
        let hidden_raw = ck.meta("hidden")?;
        let hidden = if hidden_raw.is_empty() {
            Vec::new()
        } else {
            hidden_raw.split(',').map(|s| s.parse().map_err(|_| ProposalError::Spec(format!("hidden sizes `{hidden_raw}`")))).collect::<Result<_, _>>()?
        };
        let activation = match ck.meta("activation")? {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            other => return Err(ProposalError::Spec(format!("activation `{other}`"))),
        };
        let mut sizes = vec![cond_dim.max(1)];
        sizes.extend(&hidden);
        sizes.push(family.n_slots());
        let mut net = Mlp::zeros(&sizes, activation, &family.heads())?;
        let params = ck.array("params")?;
        if params.len() != net.n_params() {
            return Err(ProposalError::Spec(format!("checkpoint holds {} parameters, architecture needs {}", params.len(), net.n_params())));
        }
        net.params_mut().copy_from_slice(params);
        let slots = family.n_slots();
        let slot_shift = ck.array("slot_shift")?.to_vec();
        let slot_scale = ck.array("slot_scale")?.to_vec();
        let normalizer = Normalizer { shift: ck.array("norm_shift")?.to_vec(), scale: ck.array("norm_scale")?.to_vec() };
        if slot_shift.len() != slots || slot_scale.len() != slots || normalizer.shift.len() != cond_dim || normalizer.scale.len() != cond_dim {
            return Err(ProposalError::Spec("checkpoint array lengths disagree with the family".into()));
        }
        Ok(ConditionalProposal { family, cond_dim, net, slot_shift, slot_scale, normalizer })
    }
}
