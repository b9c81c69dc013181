//! Problem description and validation.
//!
//! A problem lives on an open interval `D = (x_l, x_r)` with an optional
//! strictly interior refuge interval `D_0`.  The absorption coefficient `b`
//! and the initial datum `phi` are drawn from a closed set of named
//! profiles so configs stay declarative and every accepted problem can be
//! checked against the standing hypotheses:
//!
//! - H1: `b >= 0`, its zero set is exactly the closure of `D_0`, and it is
//!   strictly positive away from that closure;
//! - H2: `0 <= phi`, with `phi <= 1` outside the closure of `D_0` (inside
//!   `D_0` the ceiling is infinite, so any bounded value is admissible).
//!
//! Hypotheses are checked numerically on a fixed validation grid; rejection
//! names the violated hypothesis.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of nodes of the grid on which hypotheses are checked.
pub const VALIDATION_GRID_N: usize = 1024;

/// Largest admissible absorption exponent; `u^p` for bounded `u` stays
/// representable in `f64` up to this power.
pub const MAX_EXPONENT: u32 = 128;

/// Uniform grid of interior nodes of an interval.  With `n` nodes the
/// spacing is `h = (x_r - x_l)/(n+1)`; the endpoints themselves carry the
/// zero exterior condition and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub h: f64,
    pub x_l: f64,
    pub x_r: f64,
    pub nodes: Vec<f64>,
}

/// Build the uniform interior grid for `(x_l, x_r)` with `n` nodes.
pub fn build_grid(x_l: f64, x_r: f64, n: usize) -> Result<Grid1D> {
    if !(x_l.is_finite() && x_r.is_finite() && x_l < x_r) {
        return Err(Error::Parameter(format!(
            "domain must be a finite interval with x_l < x_r, got ({x_l}, {x_r})"
        )));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("grid needs at least 2 nodes, got {n}")));
    }
    let h = (x_r - x_l) / (n as f64 + 1.0);
    let nodes = (1..=n).map(|i| x_l + i as f64 * h).collect();
    Ok(Grid1D { n, h, x_l, x_r, nodes })
}

impl Grid1D {
    /// Linear interpolation of nodal values at `x`, using the zero exterior
    /// condition beyond the first/last node.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        assert_eq!(values.len(), self.n, "field length must match grid");
        if x <= self.x_l || x >= self.x_r {
            return 0.0;
        }
        // Position in units of h relative to the left endpoint; node i sits
        // at offset (i+1)h.
        let s = (x - self.x_l) / self.h - 1.0;
        let i0 = s.floor();
        let frac = s - i0;
        let i0 = i0 as isize;
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= self.n {
                0.0
            } else {
                values[i as usize]
            }
        };
        at(i0) * (1.0 - frac) + at(i0 + 1) * frac
    }

    /// Index of the node closest to `x`.
    pub fn nearest_node(&self, x: f64) -> usize {
        let s = ((x - self.x_l) / self.h - 1.0).round();
        (s.max(0.0) as usize).min(self.n - 1)
    }
}

/// Nodal values of a scalar function on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn zeros(n: usize) -> Self {
        Field { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Max-norm of the nodal values.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Nodal obstacle: `+∞` inside `D_0`, `1` elsewhere (the pointwise ceiling
/// for the limit problems).
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleField {
    pub values: Vec<f64>,
}

impl ObstacleField {
    /// Nodes where the obstacle is finite, i.e. actually constrains.
    pub fn finite_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, _)| i)
    }
}

/// Closed set of named coefficient profiles.  `product` composes them, so
/// compactly supported or offset shapes can be declared without code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `x ↦ value`.
    Constant { value: f64 },
    /// Distance to the interval `[left, right]`, plus an optional offset:
    /// `x ↦ max(0, left - x, x - right) + offset`.
    DistToInterval {
        left: f64,
        right: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Downward parabola vanishing at the domain endpoints, scaled so its
    /// peak equals `amplitude`.
    ParabolicBump { amplitude: f64 },
    /// `1` on `[left, right]`, `0` elsewhere.
    Indicator { left: f64, right: f64 },
    /// Pointwise product of factor profiles.
    Product { factors: Vec<Profile> },
}

impl Profile {
    /// Evaluate at `x`; `domain` supplies the endpoints for shapes that are
    /// defined relative to the domain.
    pub fn eval(&self, x: f64, domain: (f64, f64)) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::DistToInterval { left, right, offset } => {
                (left - x).max(x - right).max(0.0) + offset
            }
            Profile::ParabolicBump { amplitude } => {
                let (xl, xr) = domain;
                let half = 0.5 * (xr - xl);
                amplitude * (x - xl) * (xr - x) / (half * half)
            }
            Profile::Indicator { left, right } => {
                if x >= *left && x <= *right {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Product { factors } => factors.iter().map(|f| f.eval(x, domain)).product(),
        }
    }
}

/// Raw, unvalidated run configuration as read from a JSON file.  Unknown
/// keys are rejected so typos cannot silently change a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub alpha: f64,
    /// `[x_l, x_r]`.
    pub domain: [f64; 2],
    /// `[l, r]` or `null` for an empty refuge.
    pub d0: Option<[f64; 2]>,
    /// Growth rate `a`.
    pub a: f64,
    /// Absorption exponent `p`.
    pub p: u32,
    pub b: Profile,
    pub phi: Profile,
}

/// A validated problem.  Construction goes through [`validate_problem`];
/// the fields are public for reading, and revalidation is idempotent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub x_l: f64,
    pub x_r: f64,
    pub d0: Option<(f64, f64)>,
    pub growth_a: f64,
    pub exponent_p: u32,
    pub b: Profile,
    pub phi: Profile,
}

impl ProblemSpec {
    pub fn domain(&self) -> (f64, f64) {
        (self.x_l, self.x_r)
    }

    /// Whether `x` lies in the closure of `D_0`.
    pub fn in_d0_closure(&self, x: f64) -> bool {
        match self.d0 {
            Some((l, r)) => x >= l && x <= r,
            None => false,
        }
    }

    /// Whether `x` lies in the open interval `D_0`.
    pub fn in_d0_open(&self, x: f64) -> bool {
        match self.d0 {
            Some((l, r)) => x > l && x < r,
            None => false,
        }
    }

    /// Nodal values of `b` on `grid`.
    pub fn b_field(&self, grid: &Grid1D) -> Field {
        Field::new(grid.nodes.iter().map(|&x| self.b.eval(x, self.domain())).collect())
    }

    /// Nodal values of `phi` on `grid`.
    pub fn phi_field(&self, grid: &Grid1D) -> Field {
        Field::new(grid.nodes.iter().map(|&x| self.phi.eval(x, self.domain())).collect())
    }

    /// Grid over the full domain.
    pub fn grid(&self, n: usize) -> Result<Grid1D> {
        build_grid(self.x_l, self.x_r, n)
    }

    /// The round-trip config corresponding to this problem.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            alpha: self.alpha,
            domain: [self.x_l, self.x_r],
            d0: self.d0.map(|(l, r)| [l, r]),
            a: self.growth_a,
            p: self.exponent_p,
            b: self.b.clone(),
            phi: self.phi.clone(),
        }
    }
}

fn validation_err(hypothesis: &str, detail: String) -> Error {
    Error::Validation { hypothesis: hypothesis.to_string(), detail }
}

/// Validate a raw configuration: parameter ranges, geometry, and the
/// hypotheses H1/H2 checked on the validation grid.
pub fn validate_problem(raw: &RawConfig) -> Result<ProblemSpec> {
    if !(raw.alpha > 0.0 && raw.alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {}", raw.alpha)));
    }
    let [x_l, x_r] = raw.domain;
    if !(x_l.is_finite() && x_r.is_finite() && x_l < x_r) {
        return Err(validation_err(
            "geometry",
            format!("domain must satisfy x_l < x_r, got ({x_l}, {x_r})"),
        ));
    }
    let d0 = match raw.d0 {
        Some([l, r]) => {
            if !(x_l < l && l < r && r < x_r) {
                return Err(validation_err(
                    "geometry",
                    format!("d0 = ({l}, {r}) must be strictly inside the domain ({x_l}, {x_r})"),
                ));
            }
            Some((l, r))
        }
        None => None,
    };
    if !raw.a.is_finite() {
        return Err(Error::Parameter(format!("growth rate must be finite, got {}", raw.a)));
    }
    if raw.p < 2 || raw.p > MAX_EXPONENT {
        return Err(Error::Parameter(format!(
            "exponent p must lie in [2, {MAX_EXPONENT}], got {}",
            raw.p
        )));
    }

    let problem = ProblemSpec {
        alpha: raw.alpha,
        x_l,
        x_r,
        d0,
        growth_a: raw.a,
        exponent_p: raw.p,
        b: raw.b.clone(),
        phi: raw.phi.clone(),
    };

    let grid = build_grid(x_l, x_r, VALIDATION_GRID_N)?;
    let b = problem.b_field(&grid);
    let phi = problem.phi_field(&grid);

    for (i, &x) in grid.nodes.iter().enumerate() {
        let bv = b.values[i];
        if !bv.is_finite() || bv < 0.0 {
            return Err(validation_err("H1", format!("b({x}) = {bv} is not finite and nonnegative")));
        }
        if problem.in_d0_closure(x) {
            if bv != 0.0 {
                return Err(validation_err(
                    "H1",
                    format!("b must vanish on the closure of d0, but b({x}) = {bv}"),
                ));
            }
        } else if bv == 0.0 {
            return Err(validation_err(
                "H1",
                format!("b must be strictly positive away from the closure of d0, but b({x}) = 0"),
            ));
        }

        let pv = phi.values[i];
        if !pv.is_finite() || pv < 0.0 {
            return Err(validation_err("H2", format!("phi({x}) = {pv} is not finite and nonnegative")));
        }
        if !problem.in_d0_closure(x) && pv > 1.0 {
            return Err(validation_err(
                "H2",
                format!("phi must not exceed 1 outside the closure of d0, but phi({x}) = {pv}"),
            ));
        }
    }

    Ok(problem)
}

/// Nodal obstacle for the limit problems: `+∞` strictly inside `D_0`, `1`
/// at every other node (including nodes that fall exactly on the endpoints
/// of `D_0`).
pub fn obstacle_vector(problem: &ProblemSpec, grid: &Grid1D) -> ObstacleField {
    let values = grid
        .nodes
        .iter()
        .map(|&x| if problem.in_d0_open(x) { f64::INFINITY } else { 1.0 })
        .collect();
    ObstacleField { values }
}

/// The standing example problem used across tests and docs: the unit
/// interval with a centered refuge, linear-distance absorption, a parabolic
/// initial datum and a growth rate inside the existence window.
pub const CANONICAL_CONFIG: &str = include_str!("../configs/canonical.json");

/// Parse and validate [`CANONICAL_CONFIG`].
pub fn canonical_problem() -> ProblemSpec {
    let raw: RawConfig =
        serde_json::from_str(CANONICAL_CONFIG).expect("canonical config parses");
    validate_problem(&raw).expect("canonical config validates")
}
