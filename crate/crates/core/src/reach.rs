//! Data-driven reach tubes.
//!
//! Each step fits an affine model `x+ ~ M [1; x - x*; u - u*]` by least
//! squares on the offline data, bounds the data residuals by a box, and
//! propagates
//!
//! ```text
//! R_{j+1} = M ({1} x (R_j - x*) x {0}) + W + Z_L + Z_eps
//! ```
//!
//! with `x*` the center of `R_j`, `u* = u_j`, `Z_L = box(l_lo, l_hi) + (-W)`
//! and `Z_eps = <0, L delta I>`.

use crate::envsim::EnvKind;
use crate::error::{Error, Result};
use crate::setgeom::{Interval, Zonotope};
use crate::sysid::{estimate_lipschitz, LipschitzEstimate, TrajectoryData, Warp};
use crate::{Matrix, Vector};

/// Relative cutoff for singular values in the pseudoinverse.
pub const PINV_RCOND: f64 = 1e-10;

/// Affine model `M = [constant | state block | input block]` fitted around
/// `(lin_state, lin_input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachStepModel {
    pub matrix: Matrix,
    pub lin_state: Vector,
    pub lin_input: Vector,
}

impl ReachStepModel {
    pub fn state_dim(&self) -> usize {
        self.lin_state.len()
    }

    pub fn action_dim(&self) -> usize {
        self.lin_input.len()
    }

    pub fn constant(&self) -> Vector {
        self.matrix.column(0).into_owned()
    }

    pub fn state_block(&self) -> Matrix {
        let n = self.state_dim();
        self.matrix.columns(1, n).into_owned()
    }

    pub fn input_block(&self) -> Matrix {
        let (n, m) = (self.state_dim(), self.action_dim());
        self.matrix.columns(1 + n, m).into_owned()
    }

    /// `M [1; x - x*; u - u*]`.
    pub fn predict(&self, x: &Vector, u: &Vector) -> Vector {
        self.constant()
            + self.state_block() * (x - &self.lin_state)
            + self.input_block() * (u - &self.lin_input)
    }
}

/// Reach sets `R_k .. R_{k+H}` and the `H` models linking them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachTube {
    pub sets: Vec<Zonotope>,
    pub models: Vec<ReachStepModel>,
    pub start_index: usize,
}

impl ReachTube {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.models.len()
    }
}

/// `<0, L delta I_n>`; a singleton when the product is zero.
pub fn lipschitz_zonotope(est: &LipschitzEstimate, n: usize) -> Zonotope {
    let r = est.product();
    if r == 0.0 {
        Zonotope::singleton(Vector::zeros(n))
    } else {
        Zonotope::from_diagonal(&vec![r; n])
    }
}

fn regressors(data: &TrajectoryData, x_star: &Vector, u_star: &Vector) -> Matrix {
    let (n, m, t) = (data.state_dim(), data.action_dim(), data.len());
    let mut phi = Matrix::zeros(1 + n + m, t);
    for j in 0..t {
        phi[(0, j)] = 1.0;
        for i in 0..n {
            phi[(1 + i, j)] = data.x_minus()[(i, j)] - x_star[i];
        }
        for i in 0..m {
            phi[(1 + n + i, j)] = data.u_minus()[(i, j)] - u_star[i];
        }
    }
    phi
}

/// Truncated pseudoinverse and numerical rank.
fn pinv(a: &Matrix) -> Result<(Matrix, usize)> {
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return Err(Error::DegenerateData("all-zero regressor matrix".into()));
    }
    let cutoff = PINV_RCOND * sigma_max;
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    Ok((out, rank))
}

fn check_dims(data: &TrajectoryData, x_star: &Vector, u_star: &Vector, w: &Zonotope) -> Result<()> {
    if x_star.len() != data.state_dim() {
        return Err(Error::dim(
            "linearization state",
            data.state_dim(),
            x_star.len(),
        ));
    }
    if u_star.len() != data.action_dim() {
        return Err(Error::dim(
            "linearization input",
            data.action_dim(),
            u_star.len(),
        ));
    }
    if w.dim() != data.state_dim() {
        return Err(Error::dim("noise zonotope", data.state_dim(), w.dim()));
    }
    Ok(())
}

/// `M = (X+ - c_w 1^T) pinv([1; X- - x* 1^T; U- - u* 1^T])`.
pub fn fit_local_model(
    data: &TrajectoryData,
    x_star: &Vector,
    u_star: &Vector,
    w: &Zonotope,
) -> Result<ReachStepModel> {
    check_dims(data, x_star, u_star, w)?;
    if data.is_empty() {
        return Err(Error::DegenerateData("no data columns".into()));
    }
    let phi = regressors(data, x_star, u_star);
    let (phi_pinv, _) = pinv(&phi)?;
    let mut y = data.x_plus().clone();
    for mut col in y.column_iter_mut() {
        col -= w.center();
    }
    Ok(ReachStepModel {
        matrix: y * phi_pinv,
        lin_state: x_star.clone(),
        lin_input: u_star.clone(),
    })
}

/// Per-coordinate residual range `[l_lo, l_hi]` of the data under `model`.
pub fn residual_bounds(data: &TrajectoryData, model: &ReachStepModel) -> Interval {
    let phi = regressors(data, &model.lin_state, &model.lin_input);
    let resid = data.x_plus() - &model.matrix * phi;
    let n = data.state_dim();
    let lo = Vector::from_iterator(n, resid.row_iter().map(|r| r.min()));
    let hi = Vector::from_iterator(n, resid.row_iter().map(|r| r.max()));
    Interval::new(lo, hi).expect("min <= max")
}

/// `Z_L = box(l_lo, l_hi) + (-W)`.
pub fn mismatch_bounds(
    data: &TrajectoryData,
    model: &ReachStepModel,
    w: &Zonotope,
) -> Result<Zonotope> {
    residual_bounds(data, model)
        .to_zonotope()
        .minkowski_sum(&w.negate())
}

/// `M ({1} x (R - x*) x {u - u*}) + extra`.
fn propagate(
    r: &Zonotope,
    u: &Vector,
    model: &ReachStepModel,
    extra: &Zonotope,
) -> Result<Zonotope> {
    let n = model.state_dim();
    if r.dim() != n {
        return Err(Error::dim("reach step set", n, r.dim()));
    }
    if u.len() != model.action_dim() {
        return Err(Error::dim("reach step action", model.action_dim(), u.len()));
    }
    if extra.dim() != n {
        return Err(Error::dim("reach step disturbance", n, extra.dim()));
    }
    let shifted = r.translate(&-&model.lin_state)?;
    let one = Zonotope::singleton(Vector::from_element(1, 1.0));
    let input = Zonotope::singleton(u - &model.lin_input);
    let product = one.cartesian_product(&shifted).cartesian_product(&input);
    product.linear_map(&model.matrix)?.minkowski_sum(extra)
}

/// One step `R_{j+1} = M ({1} x (R_j - x*) x {0}) + W + Z_L + Z_eps`.
pub fn reach_step(
    r: &Zonotope,
    u: &Vector,
    model: &ReachStepModel,
    w: &Zonotope,
    z_eps: &Zonotope,
    z_l: &Zonotope,
) -> Result<Zonotope> {
    let extra = w.minkowski_sum(z_l)?.minkowski_sum(z_eps)?;
    propagate(r, u, model, &extra)
}

/// Literal tube: refit the model at every step's set center.
pub fn reach_tube(
    r0: &Zonotope,
    actions: &[Vector],
    data: &TrajectoryData,
    w: &Zonotope,
    est: &LipschitzEstimate,
) -> Result<ReachTube> {
    let z_eps = lipschitz_zonotope(est, data.state_dim());
    let mut sets = vec![r0.clone()];
    let mut models = Vec::with_capacity(actions.len());
    for (j, u) in actions.iter().enumerate() {
        let wrap = |e: Error| Error::Reach {
            step: j,
            source: Box::new(e),
        };
        let r = sets.last().expect("nonempty");
        let model = fit_local_model(data, r.center(), u, w).map_err(wrap)?;
        let z_l = mismatch_bounds(data, &model, w).map_err(wrap)?;
        let next = reach_step(r, u, &model, w, &z_eps, &z_l).map_err(wrap)?;
        sets.push(next);
        models.push(model);
    }
    Ok(ReachTube {
        sets,
        models,
        start_index: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachConfig {
    /// Multiplier on `L delta`; 1 gives the estimate as computed.
    pub lipschitz_scale: f64,
    /// Compute in the unit-box coordinates fitted to the data.
    pub warp: bool,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            lipschitz_scale: 1.0,
            warp: true,
        }
    }
}

impl ReachConfig {
    /// Calibrated settings for the bundled simulators. The unscaled
    /// covering term is several times the per-step motion, so both shrink
    /// it; the point mass keeps raw coordinates because its data spans many
    /// meters of position and warping would stretch the box over that span.
    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointMass2D => Self {
                lipschitz_scale: 1e-3,
                warp: false,
            },
            EnvKind::Unicycle2D => Self {
                lipschitz_scale: 1e-2,
                warp: true,
            },
        }
    }
}

/// Precomputed tube engine for one dataset.
///
/// Adding an intercept to a least-squares fit makes the slope blocks
/// independent of the linearization point and moves the intercept by
/// `S dx + B du`; the residuals, and hence `Z_L`, do not change. The engine
/// fits once and applies that identity, falling back to a fresh fit when the
/// regressors are rank deficient.
#[derive(Debug, Clone)]
pub struct Reachability {
    data: TrajectoryData,
    warp: Warp,
    noise: Zonotope,
    estimate: LipschitzEstimate,
    z_eps: Zonotope,
    z_l: Zonotope,
    /// `W + Z_L + Z_eps`, compacted.
    disturbance: Zonotope,
    base: Option<ReachStepModel>,
    config: ReachConfig,
}

impl Reachability {
    /// `noise` is in original coordinates. The Lipschitz estimate is taken
    /// on the working (possibly warped) data.
    pub fn new(data: &TrajectoryData, noise: &Zonotope, config: ReachConfig) -> Result<Self> {
        Self::build(data, noise, None, config)
    }

    /// As [`Reachability::new`] with a supplied estimate in working
    /// coordinates.
    pub fn with_estimate(
        data: &TrajectoryData,
        noise: &Zonotope,
        estimate: LipschitzEstimate,
        config: ReachConfig,
    ) -> Result<Self> {
        Self::build(data, noise, Some(estimate), config)
    }

    fn build(
        data: &TrajectoryData,
        noise: &Zonotope,
        estimate: Option<LipschitzEstimate>,
        config: ReachConfig,
    ) -> Result<Self> {
        if !(config.lipschitz_scale >= 0.0 && config.lipschitz_scale.is_finite()) {
            return Err(Error::Config(format!(
                "lipschitz scale {} is not a nonnegative number",
                config.lipschitz_scale
            )));
        }
        if noise.dim() != data.state_dim() {
            return Err(Error::dim(
                "Reachability noise",
                data.state_dim(),
                noise.dim(),
            ));
        }
        let n = data.state_dim();
        let warp = if config.warp {
            Warp::fit(data)
        } else {
            Warp::identity(n)
        };
        let wdata = warp.apply_data(data);
        let wnoise = warp.apply_noise(noise);
        let estimate = match estimate {
            Some(e) => e,
            None => estimate_lipschitz(&wdata)?,
        };
        let scaled = LipschitzEstimate {
            l_star_hat: estimate.l_star_hat * config.lipschitz_scale,
            delta_hat: estimate.delta_hat,
        };
        let z_eps = lipschitz_zonotope(&scaled, n);

        let x_bar = row_means(wdata.x_minus());
        let u_bar = row_means(wdata.u_minus());
        let model = fit_local_model(&wdata, &x_bar, &u_bar, &wnoise)?;
        let z_l = mismatch_bounds(&wdata, &model, &wnoise)?;
        let (_, rank) = pinv(&regressors(&wdata, &x_bar, &u_bar))?;
        let base = (rank == 1 + n + data.action_dim()).then_some(model);
        let disturbance = wnoise.minkowski_sum(&z_l)?.minkowski_sum(&z_eps)?.compact();

        Ok(Self {
            data: wdata,
            warp,
            noise: wnoise,
            estimate,
            z_eps,
            z_l,
            disturbance,
            base,
            config,
        })
    }

    pub fn config(&self) -> ReachConfig {
        self.config
    }

    /// Estimate in working coordinates, before scaling.
    pub fn estimate(&self) -> LipschitzEstimate {
        self.estimate
    }

    pub fn warp(&self) -> &Warp {
        &self.warp
    }

    pub fn state_dim(&self) -> usize {
        self.data.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.data.action_dim()
    }

    /// Working-coordinate data, noise, `Z_eps` and `Z_L`.
    pub fn working_data(&self) -> &TrajectoryData {
        &self.data
    }

    pub fn working_noise(&self) -> &Zonotope {
        &self.noise
    }

    pub fn z_eps(&self) -> &Zonotope {
        &self.z_eps
    }

    pub fn z_l(&self) -> &Zonotope {
        &self.z_l
    }

    /// Model at a working-coordinate linearization point.
    pub fn model_at(&self, x_star: &Vector, u_star: &Vector) -> Result<ReachStepModel> {
        match &self.base {
            Some(base) => {
                let mut matrix = base.matrix.clone();
                let shift = base.state_block() * (x_star - &base.lin_state)
                    + base.input_block() * (u_star - &base.lin_input);
                let mut c = matrix.column_mut(0);
                c += shift;
                Ok(ReachStepModel {
                    matrix,
                    lin_state: x_star.clone(),
                    lin_input: u_star.clone(),
                })
            }
            None => fit_local_model(&self.data, x_star, u_star, &self.noise),
        }
    }

    /// Tube from the point `x_k` (original coordinates) along `actions`.
    pub fn tube(&self, x_k: &Vector, actions: &[Vector]) -> Result<ReachTube> {
        self.tube_from(&Zonotope::singleton(x_k.clone()), actions)
    }

    pub fn tube_from(&self, r0: &Zonotope, actions: &[Vector]) -> Result<ReachTube> {
        if r0.dim() != self.state_dim() {
            return Err(Error::dim("Reachability::tube", self.state_dim(), r0.dim()));
        }
        let mut current = self.warp.apply_set(r0);
        let mut sets = Vec::with_capacity(actions.len() + 1);
        let mut models = Vec::with_capacity(actions.len());
        sets.push(r0.clone());
        for (j, u) in actions.iter().enumerate() {
            let wrap = |e: Error| Error::Reach {
                step: j,
                source: Box::new(e),
            };
            let model = self.model_at(current.center(), u).map_err(wrap)?;
            current = propagate(&current, u, &model, &self.disturbance).map_err(wrap)?;
            sets.push(self.warp.invert_set(&current));
            models.push(self.unwarp_model(&model));
        }
        Ok(ReachTube {
            sets,
            models,
            start_index: 0,
        })
    }

    /// Working-coordinate model expressed on original states.
    fn unwarp_model(&self, model: &ReachStepModel) -> ReachStepModel {
        let (n, m) = (self.state_dim(), self.action_dim());
        let d = self.warp.matrix();
        let d_inv = self.warp.inverse_matrix();
        let mut matrix = Matrix::zeros(n, 1 + n + m);
        matrix.set_column(0, &(&d_inv * (model.constant() - &self.warp.offset)));
        matrix
            .columns_mut(1, n)
            .copy_from(&(&d_inv * model.state_block() * d));
        matrix
            .columns_mut(1 + n, m)
            .copy_from(&(&d_inv * model.input_block()));
        ReachStepModel {
            matrix,
            lin_state: self.warp.invert(&model.lin_state),
            lin_input: model.lin_input.clone(),
        }
    }
}

fn row_means(m: &Matrix) -> Vector {
    let t = m.ncols().max(1) as f64;
    Vector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / t))
}
