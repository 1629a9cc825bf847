//! Offline trajectory data and the quantities derived from it.

use rand::Rng;

use crate::envsim::BlackBoxEnv;
use crate::error::{Error, Result};
use crate::setgeom::Zonotope;
use crate::{Matrix, Vector};

/// Default number of random steps collected offline.
pub const DEFAULT_STEPS: usize = 500;

/// Column `j` of `x_plus` is the observed successor of column `j` of
/// `x_minus` under input column `j` of `u_minus`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    x_minus: Matrix,
    x_plus: Matrix,
    u_minus: Matrix,
}

impl TrajectoryData {
    pub fn new(x_minus: Matrix, x_plus: Matrix, u_minus: Matrix) -> Result<Self> {
        if x_plus.shape() != x_minus.shape() {
            return Err(Error::Dataset(format!(
                "x_minus is {:?} but x_plus is {:?}",
                x_minus.shape(),
                x_plus.shape()
            )));
        }
        if u_minus.ncols() != x_minus.ncols() {
            return Err(Error::Dataset(format!(
                "{} state columns but {} input columns",
                x_minus.ncols(),
                u_minus.ncols()
            )));
        }
        if [&x_minus, &x_plus, &u_minus]
            .iter()
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Dataset("non-finite entry".into()));
        }
        Ok(Self {
            x_minus,
            x_plus,
            u_minus,
        })
    }

    pub fn from_columns(triples: &[(Vector, Vector, Vector)]) -> Result<Self> {
        let Some((x0, u0, _)) = triples.first() else {
            return Err(Error::InsufficientData("no samples".into()));
        };
        let (n, m, t) = (x0.len(), u0.len(), triples.len());
        let mut xm = Matrix::zeros(n, t);
        let mut xp = Matrix::zeros(n, t);
        let mut um = Matrix::zeros(m, t);
        for (j, (x, u, y)) in triples.iter().enumerate() {
            if x.len() != n || y.len() != n || u.len() != m {
                return Err(Error::Dataset(format!(
                    "sample {j} has inconsistent dimensions"
                )));
            }
            xm.set_column(j, x);
            xp.set_column(j, y);
            um.set_column(j, u);
        }
        Self::new(xm, xp, um)
    }

    pub fn x_minus(&self) -> &Matrix {
        &self.x_minus
    }

    pub fn x_plus(&self) -> &Matrix {
        &self.x_plus
    }

    pub fn u_minus(&self) -> &Matrix {
        &self.u_minus
    }

    pub fn len(&self) -> usize {
        self.x_minus.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.u_minus.nrows()
    }

    /// Stacked `(x, u)` column `j`.
    pub fn stacked(&self, j: usize) -> Vector {
        let (n, m) = (self.state_dim(), self.action_dim());
        let mut z = Vector::zeros(n + m);
        z.rows_mut(0, n).copy_from(&self.x_minus.column(j));
        z.rows_mut(n, m).copy_from(&self.u_minus.column(j));
        z
    }

    /// Keep the first occurrence of every distinct `(x, u)` column.
    pub fn dedup(&self) -> TrajectoryData {
        let mut keep: Vec<usize> = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let zj = self.stacked(j);
            if !keep.iter().any(|&i| self.stacked(i) == zj) {
                keep.push(j);
            }
        }
        if keep.len() == self.len() {
            return self.clone();
        }
        TrajectoryData {
            x_minus: self.x_minus.select_columns(&keep),
            x_plus: self.x_plus.select_columns(&keep),
            u_minus: self.u_minus.select_columns(&keep),
        }
    }
}

/// Random-input data from an obstacle-free environment. With
/// `restart_every = Some(q)` the rollout restarts from a fresh
/// [`BlackBoxEnv::data_start`] every `q` steps, giving several trajectories
/// stored side by side.
pub fn collect_random_data<R: Rng + ?Sized>(
    env: &BlackBoxEnv,
    steps: usize,
    restart_every: Option<usize>,
    rng: &mut R,
) -> Result<TrajectoryData> {
    if steps < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 steps, asked for {steps}"
        )));
    }
    let (n, m) = (env.state_dim(), env.action_dim());
    let mut xm = Matrix::zeros(n, steps);
    let mut xp = Matrix::zeros(n, steps);
    let mut um = Matrix::zeros(m, steps);
    let mut x = env.data_start(rng);
    for k in 0..steps {
        if let Some(q) = restart_every {
            if q > 0 && k > 0 && k % q == 0 {
                x = env.data_start(rng);
            }
        }
        let u = env.random_action(rng);
        let next = env.step(&x, &u, rng).map_err(|e| match e {
            Error::EnvStep { reason, .. } => Error::EnvStep { step: k, reason },
            other => other,
        })?;
        xm.set_column(k, &x);
        um.set_column(k, &u);
        xp.set_column(k, &next);
        x = next;
    }
    TrajectoryData::new(xm, xp, um)
}

/// Sampled Lipschitz constant `L` and covering radius `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub l_star_hat: f64,
    pub delta_hat: f64,
}

impl LipschitzEstimate {
    /// Half-width of the model-error box, `L * delta`.
    pub fn product(&self) -> f64 {
        self.l_star_hat * self.delta_hat
    }
}

/// `L = max_{i != j} |y_i - y_j| / |z_i - z_j|` and
/// `delta = max_i min_{j != i} |z_i - z_j|` over the deduplicated data, with
/// `z = (x, u)` and `y` the observed successor.
pub fn estimate_lipschitz(data: &TrajectoryData) -> Result<LipschitzEstimate> {
    let data = data.dedup();
    let t = data.len();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "{t} distinct samples, need at least 2"
        )));
    }
    let z: Vec<Vector> = (0..t).map(|j| data.stacked(j)).collect();
    let y: Vec<Vector> = (0..t)
        .map(|j| data.x_plus().column(j).into_owned())
        .collect();
    let mut l_star: f64 = 0.0;
    let mut nearest = vec![f64::INFINITY; t];
    for i in 0..t {
        for j in (i + 1)..t {
            let dz = (&z[i] - &z[j]).norm();
            let dy = (&y[i] - &y[j]).norm();
            l_star = l_star.max(dy / dz);
            nearest[i] = nearest[i].min(dz);
            nearest[j] = nearest[j].min(dz);
        }
    }
    let delta = nearest.into_iter().fold(0.0, f64::max);
    Ok(LipschitzEstimate {
        l_star_hat: l_star,
        delta_hat: delta,
    })
}

/// Per-coordinate affine map `x -> scale .* x + offset` sending the data's
/// state bounding box onto the unit box.
#[derive(Debug, Clone, PartialEq)]
pub struct Warp {
    pub scale: Vector,
    pub offset: Vector,
}

impl Warp {
    pub fn identity(n: usize) -> Self {
        Self {
            scale: Vector::from_element(n, 1.0),
            offset: Vector::zeros(n),
        }
    }

    /// Bounds are taken over both `x_minus` and `x_plus`. A coordinate with
    /// zero range gets scale 1 and offset `-value`.
    pub fn fit(data: &TrajectoryData) -> Self {
        let n = data.state_dim();
        let mut scale = Vector::from_element(n, 1.0);
        let mut offset = Vector::zeros(n);
        for i in 0..n {
            let row = data
                .x_minus()
                .row(i)
                .iter()
                .chain(data.x_plus().row(i).iter())
                .copied()
                .collect::<Vec<_>>();
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                scale[i] = 1.0 / (hi - lo);
                offset[i] = -lo * scale[i];
            } else {
                offset[i] = -lo;
            }
        }
        Self { scale, offset }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.scale)
    }

    pub fn inverse_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.scale.map(|s| 1.0 / s))
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        x.component_mul(&self.scale) + &self.offset
    }

    pub fn invert(&self, x: &Vector) -> Vector {
        (x - &self.offset).component_div(&self.scale)
    }

    /// Affine image of a set of states.
    pub fn apply_set(&self, z: &Zonotope) -> Zonotope {
        let c = self.apply(z.center());
        Zonotope::new(c, z.generators().clone_owned().scale_rows(&self.scale))
            .expect("dimension preserved")
    }

    pub fn invert_set(&self, z: &Zonotope) -> Zonotope {
        let c = self.invert(z.center());
        let inv = self.scale.map(|s| 1.0 / s);
        Zonotope::new(c, z.generators().clone_owned().scale_rows(&inv))
            .expect("dimension preserved")
    }

    /// Additive disturbances see only the linear part.
    pub fn apply_noise(&self, w: &Zonotope) -> Zonotope {
        Zonotope::new(
            w.center().component_mul(&self.scale),
            w.generators().clone_owned().scale_rows(&self.scale),
        )
        .expect("dimension preserved")
    }

    pub fn invert_noise(&self, w: &Zonotope) -> Zonotope {
        let inv = self.scale.map(|s| 1.0 / s);
        Zonotope::new(
            w.center().component_mul(&inv),
            w.generators().clone_owned().scale_rows(&inv),
        )
        .expect("dimension preserved")
    }

    /// Warp the state rows of a dataset; inputs are untouched.
    pub fn apply_data(&self, data: &TrajectoryData) -> TrajectoryData {
        let warp_cols = |m: &Matrix| {
            let mut out = m.clone_owned().scale_rows(&self.scale);
            for mut col in out.column_iter_mut() {
                col += &self.offset;
            }
            out
        };
        TrajectoryData {
            x_minus: warp_cols(&data.x_minus),
            x_plus: warp_cols(&data.x_plus),
            u_minus: data.u_minus.clone(),
        }
    }
}

trait ScaleRows {
    fn scale_rows(self, s: &Vector) -> Self;
}

impl ScaleRows for Matrix {
    fn scale_rows(mut self, s: &Vector) -> Self {
        for (i, mut row) in self.row_iter_mut().enumerate() {
            row *= s[i];
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_data(xs: &[f64], a: f64) -> TrajectoryData {
        let t = xs.len();
        TrajectoryData::new(
            Matrix::from_row_slice(1, t, xs),
            Matrix::from_row_slice(1, t, &xs.iter().map(|x| a * x).collect::<Vec<_>>()),
            Matrix::zeros(0, t),
        )
        .unwrap()
    }

    #[test]
    fn linear_ratio_is_constant() {
        let est = estimate_lipschitz(&scalar_data(&[0.3, -1.0, 2.0, 0.7], 0.5)).unwrap();
        assert!((est.l_star_hat - 0.5).abs() < 1e-15);
        assert!((est.delta_hat - 1.3).abs() < 1e-12);
    }

    #[test]
    fn two_samples() {
        let est = estimate_lipschitz(&scalar_data(&[1.0, 4.0], 2.0)).unwrap();
        assert_eq!(est.delta_hat, 3.0);
        assert_eq!(est.l_star_hat, 2.0);
    }

    #[test]
    fn duplicates_dropped() {
        let data = scalar_data(&[1.0, 1.0, 1.0], 2.0);
        assert_eq!(data.dedup().len(), 1);
        assert!(estimate_lipschitz(&data).is_err());
        let est = estimate_lipschitz(&scalar_data(&[1.0, 1.0, 3.0], 2.0)).unwrap();
        assert_eq!(est.delta_hat, 2.0);
    }

    #[test]
    fn point_mass_shapes_and_noiseless_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = BlackBoxEnv::point_mass();
        let d = collect_random_data(&env, 500, None, &mut rng).unwrap();
        assert_eq!(d.x_minus().shape(), (4, 500));
        assert_eq!(d.x_plus().shape(), (4, 500));
        assert_eq!(d.u_minus().shape(), (2, 500));
        assert!(collect_random_data(&env, 1, None, &mut rng).is_err());

        let quiet = BlackBoxEnv::point_mass()
            .with_noise(Zonotope::singleton(Vector::zeros(4)))
            .unwrap();
        let d = collect_random_data(&quiet, 2, None, &mut rng).unwrap();
        for j in 0..2 {
            let x = d.x_minus().column(j);
            let u = d.u_minus().column(j);
            let want = [
                x[0] + 0.1 * x[2] + 0.005 * u[0],
                x[1] + 0.1 * x[3] + 0.005 * u[1],
                x[2] + 0.1 * u[0],
                x[3] + 0.1 * u[1],
            ];
            for i in 0..4 {
                assert!((d.x_plus()[(i, j)] - want[i]).abs() < 1e-15);
            }
        }
        // Consecutive columns chain.
        assert_eq!(d.x_plus().column(0), d.x_minus().column(1));
    }

    #[test]
    fn warp_formula_and_round_trip() {
        let d = TrajectoryData::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.5]),
            Matrix::from_row_slice(2, 2, &[0.0, 0.5, 2.0, 2.0]),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        let w = Warp::fit(&d);
        assert_eq!(w.scale[0], 0.5);
        assert_eq!(w.offset[0], 0.5);
        assert_eq!(w.apply(&Vector::from_column_slice(&[-1.0, 0.0]))[0], 0.0);
        assert_eq!(w.apply(&Vector::from_column_slice(&[1.0, 2.0]))[0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = Vector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
            let back = w.invert(&w.apply(&x));
            assert!((back - &x).amax() <= 1e-12 * x.amax().max(1.0));
        }
        let wd = w.apply_data(&d);
        assert!(wd
            .x_minus()
            .iter()
            .chain(wd.x_plus().iter())
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn degenerate_coordinate() {
        let d = TrajectoryData::new(
            Matrix::from_row_slice(1, 2, &[3.0, 3.0]),
            Matrix::from_row_slice(1, 2, &[3.0, 3.0]),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        let w = Warp::fit(&d);
        assert_eq!(w.scale[0], 1.0);
        assert_eq!(w.offset[0], -3.0);
    }

    #[test]
    fn set_warp_round_trip() {
        let w = Warp {
            scale: Vector::from_column_slice(&[0.5, 4.0]),
            offset: Vector::from_column_slice(&[1.0, -2.0]),
        };
        let z = Zonotope::new(
            Vector::from_column_slice(&[1.0, 2.0]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 2.0]),
        )
        .unwrap();
        let back = w.invert_set(&w.apply_set(&z));
        assert!((back.center() - z.center()).amax() < 1e-15);
        assert!((back.generators() - z.generators()).amax() < 1e-15);
        let wn = w.apply_noise(&z);
        assert_eq!(wn.center()[1], 8.0);
    }
}
