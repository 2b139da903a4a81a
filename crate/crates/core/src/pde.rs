//! Backward-parabolic solver on the moving domain `{x < b(t)}`.
//!
//! The boundary-fitted change of variable `y = b(t) - x` maps the moving
//! boundary to the fixed line `y = 0`; in the new coordinate
//! `v(t, y) = u(t, b(t) - y)` solves
//! `v_t + b'(t) v_y + (1/2) v_yy + q = 0` with `v(t, 0) = data(t)`,
//! marched backward from `t_max` with Crank-Nicolson time stepping, central
//! differencing of the drift term and a tridiagonal solve per step. The far
//! field at `y_max` is zero-Neumann; the terminal condition is the constant
//! extension of the boundary data. Note `u_x = -v_y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, DeltaTrace, Payoff};

/// Space-time grid in boundary-fitted coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Truncation depth below the boundary, `y = b(t) - x in [0, y_max]`.
    pub y_max: f64,
    /// Time-horizon truncation.
    pub t_max: f64,
    /// Number of space nodes (>= 16).
    pub ny: usize,
    /// Number of time nodes (>= 16).
    pub nt: usize,
    #[serde(default)]
    pub far_field: FarField,
    /// Refusal threshold on the estimated `P(tau_0 > t_max)`.
    #[serde(default = "default_truncation_tol")]
    pub truncation_tol: f64,
    /// The backward march is padded past `t_max` by `tail_factor * t_max`
    /// (same step size) before the constant-extension terminal condition is
    /// applied, so the terminal-truncation bias stays far below the O(h^2)
    /// discretization error on `[0, t_max]`. The returned field still covers
    /// `[0, t_max]` only.
    #[serde(default = "default_tail_factor")]
    pub tail_factor: f64,
}

fn default_truncation_tol() -> f64 {
    1e-4
}

fn default_tail_factor() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarField {
    #[default]
    NeumannZero,
    ConstantExtension,
}

impl GridConfig {
    pub fn new(y_max: f64, t_max: f64, ny: usize, nt: usize) -> Self {
        GridConfig {
            y_max,
            t_max,
            ny,
            nt,
            far_field: FarField::default(),
            truncation_tol: default_truncation_tol(),
            tail_factor: default_tail_factor(),
        }
    }

    /// Grid extended past `t_max` for the padded backward march.
    fn padded(&self) -> GridConfig {
        if self.tail_factor <= 0.0 {
            return self.clone();
        }
        let ht = self.ht();
        let extra = (self.tail_factor * self.t_max / ht).ceil() as usize;
        GridConfig {
            t_max: self.t_max + extra as f64 * ht,
            nt: self.nt + extra,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y_max > 0.0 && self.t_max > 0.0) {
            return Err(Error::schema("grid", "y_max and t_max must be positive"));
        }
        if self.ny < 16 || self.nt < 16 {
            return Err(Error::schema("grid", "ny and nt must both be >= 16"));
        }
        Ok(())
    }

    pub fn hy(&self) -> f64 {
        self.y_max / (self.ny - 1) as f64
    }

    pub fn ht(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }

    /// Grid with both spacings halved (node counts doubled-minus-one so the
    /// original nodes are preserved).
    pub fn refined(&self) -> GridConfig {
        GridConfig {
            ny: 2 * self.ny - 1,
            nt: 2 * self.nt - 1,
            ..self.clone()
        }
    }
}

/// What a solved field represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Feynman-Kac value `u` for some boundary data.
    Value,
    /// Running-cost field `w` (zero boundary data, interior source).
    RunningCost,
    /// Derived array of `u_xxx` values.
    ThirdDerivative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub kind: FieldKind,
    /// Label identifying the boundary data (payoff hash or description).
    pub data_label: String,
    /// Estimated `P(tau_0 > t_max)` from the survival solve.
    pub truncation_prob: f64,
    /// `sup|data| * truncation_prob`, the induced truncation-bias bound.
    pub bias_bound: f64,
    /// Empirical maxima recorded per solve: `max |v|, |v_y|, |v_yyy|`.
    pub derivative_maxima: [f64; 3],
}

/// Solution values over (time node, space node), row-major in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: GridConfig,
    pub boundary: Boundary,
    pub meta: FieldMeta,
    values: Vec<f64>,
}

impl Field {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, time_node: usize, space_node: usize) -> f64 {
        self.values[time_node * self.grid.ny + space_node]
    }

    pub fn time_row(&self, time_node: usize) -> &[f64] {
        &self.values[time_node * self.grid.ny..(time_node + 1) * self.grid.ny]
    }

    /// Evaluate `u(t, x)` for `x <= b(t)` by tensor cubic interpolation in
    /// (t, y). Returns `None` outside the solved domain.
    pub fn eval(&self, t: f64, x: f64) -> Option<f64> {
        let y = self.boundary.value(t) - x;
        self.eval_ty(t, y)
    }

    /// Same, addressed in boundary-fitted coordinates.
    pub fn eval_ty(&self, t: f64, y: f64) -> Option<f64> {
        let eps = 1e-12;
        if !(0.0 - eps..=self.grid.t_max + eps).contains(&t)
            || !(0.0 - eps..=self.grid.y_max + eps).contains(&y)
        {
            return None;
        }
        let ht = self.grid.ht();
        let hy = self.grid.hy();
        let tj = (t / ht).clamp(0.0, (self.grid.nt - 1) as f64);
        let yi = (y / hy).clamp(0.0, (self.grid.ny - 1) as f64);
        let j0 = stencil_start(tj, self.grid.nt);
        let i0 = stencil_start(yi, self.grid.ny);
        let lt = lagrange4(tj - j0 as f64);
        let ly = lagrange4(yi - i0 as f64);
        let mut acc = 0.0;
        for (a, &wt) in lt.iter().enumerate() {
            let row = (j0 + a) * self.grid.ny + i0;
            let mut s = 0.0;
            for (b, &wy) in ly.iter().enumerate() {
                s += wy * self.values[row + b];
            }
            acc += wt * s;
        }
        Some(acc)
    }

    /// Value at the starting point `(t, x) = (0, 0)`, i.e. `y = b(0)`.
    pub fn at_origin(&self) -> f64 {
        self.eval_ty(0.0, self.boundary.b0())
            .expect("b(0) must lie inside the grid")
    }
}

fn stencil_start(pos: f64, n: usize) -> usize {
    let i = pos.floor() as usize;
    i.saturating_sub(1).min(n - 4)
}

/// Weights of the 4-point Lagrange cubic at fractional offset `s` from the
/// first stencil node (exact on cubics).
fn lagrange4(s: f64) -> [f64; 4] {
    let s1 = s - 1.0;
    let s2 = s - 2.0;
    let s3 = s - 3.0;
    [
        -s1 * s2 * s3 / 6.0,
        s * s2 * s3 / 2.0,
        -s * s1 * s3 / 2.0,
        s * s1 * s2 / 6.0,
    ]
}

/// Thomas algorithm; `diag`, `rhs` are overwritten, solution lands in `rhs`.
fn solve_tridiagonal(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

/// Apply the spatial operator `L v = b'(t) v_y + (1/2) v_yy` at time `t`.
/// The boundary row (Dirichlet) is left at zero; the last row folds the
/// zero-Neumann ghost node.
fn apply_operator(boundary: &Boundary, grid: &GridConfig, t: f64, v: &[f64], out: &mut [f64]) {
    let hy = grid.hy();
    let drift = boundary.derivative(t);
    let cm = -drift / (2.0 * hy) + 0.5 / (hy * hy);
    let c0 = -1.0 / (hy * hy);
    let cp = drift / (2.0 * hy) + 0.5 / (hy * hy);
    let n = v.len();
    out[0] = 0.0;
    for i in 1..n - 1 {
        out[i] = cm * v[i - 1] + c0 * v[i] + cp * v[i + 1];
    }
    match grid.far_field {
        FarField::NeumannZero => {
            out[n - 1] = (v[n - 2] - v[n - 1]) / (hy * hy);
        }
        FarField::ConstantExtension => {
            // Ghost equals edge value: v_y = (v_ghost - v_{n-2})/(2hy) with
            // v_ghost = v_{n-1}.
            out[n - 1] = drift * (v[n - 1] - v[n - 2]) / (2.0 * hy)
                + 0.5 * (v[n - 2] - v[n - 1]) / (hy * hy);
        }
    }
}

/// Backward march shared by the value and running-cost solves.
///
/// `rannacher` implicit-Euler startup steps damp terminal-corner modes when
/// the terminal data is incompatible with the boundary data (survival solve).
fn march(
    boundary: &Boundary,
    grid: &GridConfig,
    data: &dyn Fn(f64) -> f64,
    terminal: &[f64],
    source: Option<&[f64]>,
    rannacher: usize,
) -> Vec<f64> {
    let (ny, nt) = (grid.ny, grid.nt);
    let ht = grid.ht();
    let hy = grid.hy();
    let mut values = vec![0.0; ny * nt];
    values[(nt - 1) * ny..].copy_from_slice(terminal);

    let mut lower = vec![0.0; ny];
    let mut upper = vec![0.0; ny];
    let mut diag = vec![0.0; ny];
    let mut rhs = vec![0.0; ny];
    let mut lnext = vec![0.0; ny];

    for j in (0..nt - 1).rev() {
        let t_old = ht * (j + 1) as f64;
        let t_new = ht * j as f64;
        let implicit = (nt - 1 - j) <= rannacher;
        // theta = 1: implicit Euler; theta = 1/2: Crank-Nicolson.
        let theta = if implicit { 1.0 } else { 0.5 };

        let (prev, cur) = values.split_at_mut((j + 1) * ny);
        let vold = &cur[..ny];
        let vnew = &mut prev[j * ny..(j + 1) * ny];

        apply_operator(boundary, grid, t_old, vold, &mut lnext);
        for i in 0..ny {
            rhs[i] = vold[i] + ht * (1.0 - theta) * lnext[i];
        }
        if let Some(q) = source {
            let qold = &q[(j + 1) * ny..(j + 2) * ny];
            let qnew = &q[j * ny..(j + 1) * ny];
            for i in 1..ny {
                rhs[i] += ht * ((1.0 - theta) * qold[i] + theta * qnew[i]);
            }
        }

        // Assemble I - theta ht L at t_new.
        let drift = boundary.derivative(t_new);
        let cm = -drift / (2.0 * hy) + 0.5 / (hy * hy);
        let c0 = -1.0 / (hy * hy);
        let cp = drift / (2.0 * hy) + 0.5 / (hy * hy);
        let a = theta * ht;
        for i in 0..ny {
            lower[i] = -a * cm;
            diag[i] = 1.0 - a * c0;
            upper[i] = -a * cp;
        }
        // Dirichlet boundary row.
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = data(t_new);
        // Far-field row.
        match grid.far_field {
            FarField::NeumannZero => {
                lower[ny - 1] = -a / (hy * hy);
                diag[ny - 1] = 1.0 + a / (hy * hy);
            }
            FarField::ConstantExtension => {
                lower[ny - 1] = -a * (0.5 / (hy * hy) - drift / (2.0 * hy));
                diag[ny - 1] = 1.0 - a * (drift / (2.0 * hy) - 0.5 / (hy * hy));
            }
        }

        solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);
        vnew.copy_from_slice(&rhs);
    }
    values
}

fn derivative_maxima(grid: &GridConfig, values: &[f64]) -> [f64; 3] {
    let hy = grid.hy();
    let ny = grid.ny;
    let mut m = [0.0f64; 3];
    for row in values.chunks(ny) {
        for i in 0..ny {
            m[0] = m[0].max(row[i].abs());
            if i + 1 < ny {
                m[1] = m[1].max(((row[i + 1] - row[i]) / hy).abs());
            }
            if i >= 2 && i + 2 < ny {
                let vyyy =
                    (-row[i - 2] + 2.0 * row[i - 1] - 2.0 * row[i + 1] + row[i + 2])
                        / (2.0 * hy * hy * hy);
                m[2] = m[2].max(vyyy.abs());
            }
        }
    }
    m
}

/// Estimate `P(tau_0 > t_max)` for the Brownian limit by solving the heat
/// equation with boundary data 0 and terminal data 1 (survival probability).
pub fn survival_probability(boundary: &Boundary, grid: &GridConfig) -> f64 {
    let terminal: Vec<f64> = (0..grid.ny).map(|i| if i == 0 { 0.0 } else { 1.0 }).collect();
    let values = march(boundary, grid, &|_| 0.0, &terminal, None, 2);
    let field = Field {
        grid: grid.clone(),
        boundary: boundary.clone(),
        meta: FieldMeta {
            kind: FieldKind::Value,
            data_label: "survival".into(),
            truncation_prob: 0.0,
            bias_bound: 0.0,
            derivative_maxima: [0.0; 3],
        },
        values,
    };
    field.at_origin().clamp(0.0, 1.0)
}

/// Run the padded backward march and keep only the rows on `[0, t_max]`.
fn march_truncated(
    boundary: &Boundary,
    grid: &GridConfig,
    data: &dyn Fn(f64) -> f64,
    source: Option<&[f64]>,
) -> Vec<f64> {
    let ext = grid.padded();
    // The data closure is evaluated on the padded range too; callers whose
    // data only exists on [0, t_max] (trace-derived boundary data) clamp it
    // themselves. The running-cost source is constant-extended row-wise.
    let terminal = vec![data(ext.t_max); ext.ny];
    let src_ext: Option<Vec<f64>> = source.map(|q| {
        let mut v = Vec::with_capacity(ext.ny * ext.nt);
        v.extend_from_slice(q);
        let last = &q[(grid.nt - 1) * grid.ny..];
        for _ in grid.nt..ext.nt {
            v.extend_from_slice(last);
        }
        v
    });
    let mut values = march(boundary, &ext, data, &terminal, src_ext.as_deref(), 0);
    values.truncate(grid.ny * grid.nt);
    values
}

/// Solve the Feynman-Kac value field for boundary data `data(t)`.
///
/// Refuses when the estimated `P(tau_0 > t_max)` exceeds the configured
/// truncation tolerance.
pub fn solve_value(
    boundary: &Boundary,
    data: &dyn Fn(f64) -> f64,
    label: &str,
    grid: &GridConfig,
) -> Result<Field> {
    grid.validate()?;
    boundary.validate()?;
    let p_survive = survival_probability(boundary, grid);
    if p_survive > grid.truncation_tol {
        return Err(Error::Refusal(format!(
            "estimated P(tau_0 > t_max) = {p_survive:.3e} exceeds truncation tolerance {:.3e}; \
             increase t_max or raise grid.truncation_tol",
            grid.truncation_tol
        )));
    }
    let sup_data = (0..grid.nt)
        .map(|j| data(grid.ht() * j as f64).abs())
        .fold(0.0, f64::max);
    let values = march_truncated(boundary, grid, data, None);
    let maxima = derivative_maxima(grid, &values);
    Ok(Field {
        grid: grid.clone(),
        boundary: boundary.clone(),
        meta: FieldMeta {
            kind: FieldKind::Value,
            data_label: label.to_string(),
            truncation_prob: p_survive,
            bias_bound: sup_data * p_survive,
            derivative_maxima: maxima,
        },
        values,
    })
}

/// Solve the running-cost field `w(t,x) = E int_t^tau q(s, Y_s) ds` with
/// `q` given on the same grid (typically the `u_xxx` array).
pub fn solve_running_cost(boundary: &Boundary, source: &Field, grid: &GridConfig) -> Result<Field> {
    grid.validate()?;
    if source.grid != *grid {
        return Err(Error::GridMismatch(
            "running-cost source must live on the target grid".into(),
        ));
    }
    if source.boundary != *boundary {
        return Err(Error::GridMismatch(
            "running-cost source solved for a different boundary".into(),
        ));
    }
    let values = march_truncated(boundary, grid, &|_| 0.0, Some(source.values()));
    let maxima = derivative_maxima(grid, &values);
    Ok(Field {
        grid: grid.clone(),
        boundary: boundary.clone(),
        meta: FieldMeta {
            kind: FieldKind::RunningCost,
            data_label: format!("running-cost({})", source.meta.data_label),
            truncation_prob: source.meta.truncation_prob,
            bias_bound: 0.0,
            derivative_maxima: maxima,
        },
        values,
    })
}

/// One-sided second-order trace of `u_x(t, b(t)-)` (note `u_x = -v_y`).
pub fn boundary_gradient(field: &Field) -> Result<Vec<f64>> {
    let ny = field.grid.ny;
    if ny < 3 {
        return Err(Error::Refusal("boundary gradient needs ny >= 3".into()));
    }
    let hy = field.grid.hy();
    Ok((0..field.grid.nt)
        .map(|j| {
            let v = field.time_row(j);
            (3.0 * v[0] - 4.0 * v[1] + v[2]) / (2.0 * hy)
        })
        .collect())
}

/// Field-shaped array of `u_xxx = -v_yyy`: centered third differences at
/// interior nodes, second-order one-sided stencils near the edges.
pub fn third_derivative(field: &Field) -> Result<Field> {
    let ny = field.grid.ny;
    if ny < 5 {
        return Err(Error::Refusal("third derivative needs ny >= 5".into()));
    }
    let h3 = field.grid.hy().powi(3);
    let mut out = vec![0.0; field.values.len()];
    for (j, row) in field.values.chunks(ny).enumerate() {
        let o = &mut out[j * ny..(j + 1) * ny];
        // Forward one-sided at the first two nodes (exact on cubics).
        o[0] = -(-2.5 * row[0] + 9.0 * row[1] - 12.0 * row[2] + 7.0 * row[3] - 1.5 * row[4]) / h3;
        o[1] = -(-1.5 * row[0] + 5.0 * row[1] - 6.0 * row[2] + 3.0 * row[3] - 0.5 * row[4]) / h3;
        for i in 2..ny - 2 {
            o[i] = -(-row[i - 2] + 2.0 * row[i - 1] - 2.0 * row[i + 1] + row[i + 2]) / (2.0 * h3);
        }
        let m = ny - 1;
        o[m - 1] = -(1.5 * row[m] - 5.0 * row[m - 1] + 6.0 * row[m - 2] - 3.0 * row[m - 3]
            + 0.5 * row[m - 4])
            / h3;
        o[m] = -(2.5 * row[m] - 9.0 * row[m - 1] + 12.0 * row[m - 2] - 7.0 * row[m - 3]
            + 1.5 * row[m - 4])
            / h3;
    }
    Ok(Field {
        grid: field.grid.clone(),
        boundary: field.boundary.clone(),
        meta: FieldMeta {
            kind: FieldKind::ThirdDerivative,
            data_label: format!("uxxx({})", field.meta.data_label),
            truncation_prob: field.meta.truncation_prob,
            bias_bound: 0.0,
            derivative_maxima: [0.0; 3],
        },
        values: out,
    })
}

/// `Delta(t) = f_x(t, b(t)) - u_x(t, b(t)-)` per time node, as a trace.
pub fn compute_delta(u_field: &Field, payoff: &Payoff) -> Result<DeltaTrace> {
    let grad = boundary_gradient(u_field)?;
    let ht = u_field.grid.ht();
    let values: Vec<f64> = grad
        .iter()
        .enumerate()
        .map(|(j, &ux)| {
            let t = ht * j as f64;
            payoff.dx(t, u_field.boundary.value(t)) - ux
        })
        .collect();
    DeltaTrace::from_uniform(0.0, ht, values)
}

/// Build a synthetic field directly from `v(t, y)` values; test support for
/// the derivative-extraction stencils.
pub fn synthetic_field(boundary: &Boundary, grid: &GridConfig, v: impl Fn(f64, f64) -> f64) -> Field {
    let mut values = vec![0.0; grid.ny * grid.nt];
    for j in 0..grid.nt {
        let t = grid.ht() * j as f64;
        for i in 0..grid.ny {
            values[j * grid.ny + i] = v(t, grid.hy() * i as f64);
        }
    }
    Field {
        grid: grid.clone(),
        boundary: boundary.clone(),
        meta: FieldMeta {
            kind: FieldKind::Value,
            data_label: "synthetic".into(),
            truncation_prob: 0.0,
            bias_bound: 0.0,
            derivative_maxima: [0.0; 3],
        },
        values,
    }
}

/// Reconstitute a field from cached parts; used by the disk cache.
pub fn field_from_parts(
    grid: GridConfig,
    boundary: Boundary,
    meta: FieldMeta,
    values: Vec<f64>,
) -> Result<Field> {
    if values.len() != grid.ny * grid.nt {
        return Err(Error::schema(
            "field.values",
            format!("expected {} values, got {}", grid.ny * grid.nt, values.len()),
        ));
    }
    Ok(Field {
        grid,
        boundary,
        meta,
        values,
    })
}

/// Closed-form value field for an affine boundary and time-exponential
/// payoff: first passage of a drifting Brownian motion has an inverse
/// Gaussian law whose Laplace transform gives
/// `u(t, x) = scale e^{-rate t} exp(-c (b(t) - x))`,
/// `c = sqrt(slope^2 + 2 rate) + slope` for boundary slope `-slope`.
pub mod closed_form {
    use crate::model::{Boundary, Payoff};

    /// Exponent constant `c` for the drift/discount pair, if available.
    pub fn exponent(boundary: &Boundary, payoff: &Payoff) -> Option<f64> {
        match (boundary, payoff) {
            (
                Boundary::Affine { slope, .. },
                Payoff::TimeExponential { rate, .. },
            ) if *slope <= 0.0 && *rate >= 0.0 => {
                let mu = -slope; // drift of the reduced problem
                Some((mu * mu + 2.0 * rate).sqrt() - mu)
            }
            _ => None,
        }
    }

    pub fn value(boundary: &Boundary, payoff: &Payoff, t: f64, x: f64) -> Option<f64> {
        let c = exponent(boundary, payoff)?;
        let scale = match payoff {
            Payoff::TimeExponential { scale, .. } => *scale,
            _ => return None,
        };
        let rate = match payoff {
            Payoff::TimeExponential { rate, .. } => *rate,
            _ => return None,
        };
        Some(scale * (-rate * t).exp() * (-c * (boundary.value(t) - x)).exp())
    }
}
