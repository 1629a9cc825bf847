//! Intervals, zonotopes and constrained zonotopes.
//!
//! A zonotope `<c, G>` is the set `{c + G z : ||z||_inf <= 1}`; a constrained
//! zonotope `<c, G, A, b>` additionally requires `A z = b`. All types are
//! immutable values and every operation returns a new set. Arithmetic is plain
//! `f64` without outward rounding; the collision side of the emptiness test
//! carries a small margin instead (see [`crate::lincheck`]).

use rand::Rng;

use crate::error::{Error, Result};
use crate::lincheck::{self, EmptinessProblem, LpStatus};
use crate::{Matrix, Vector};

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    lower: Vector,
    upper: Vector,
}

impl Interval {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("Interval::new", lower.len(), upper.len()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidInterval(i));
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            Vector::from_column_slice(lower),
            Vector::from_column_slice(upper),
        )
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vector {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, p: &Vector) -> bool {
        p.len() == self.dim()
            && (0..p.len()).all(|i| self.lower[i] <= p[i] && p[i] <= self.upper[i])
    }

    /// Elementwise clamp into the box. For an axis-aligned box this is the
    /// Euclidean projection.
    pub fn clamp(&self, p: &Vector) -> Vector {
        Vector::from_iterator(
            p.len(),
            (0..p.len()).map(|i| p[i].clamp(self.lower[i], self.upper[i])),
        )
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| {
                if self.upper[i] > self.lower[i] {
                    rng.random_range(self.lower[i]..=self.upper[i])
                } else {
                    self.lower[i]
                }
            }),
        )
    }

    /// Corner points of the box, `2^n` of them.
    pub fn vertices(&self) -> Vec<Vector> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                Vector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        if mask >> i & 1 == 1 {
                            self.upper[i]
                        } else {
                            self.lower[i]
                        }
                    }),
                )
            })
            .collect()
    }

    pub fn to_zonotope(&self) -> Zonotope {
        interval_to_zonotope(self)
    }
}

/// Zonotope `<center, generators>`; zero generator columns encode a singleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: Vector,
    generators: Matrix,
}

impl Zonotope {
    pub fn new(center: Vector, generators: Matrix) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::dim(
                "Zonotope::new",
                center.len(),
                generators.nrows(),
            ));
        }
        Ok(Self { center, generators })
    }

    pub fn singleton(center: Vector) -> Self {
        let n = center.len();
        Self {
            center,
            generators: Matrix::zeros(n, 0),
        }
    }

    /// Zero-centred set with diagonal generators.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            center: Vector::zeros(n),
            generators: Matrix::from_diagonal(&Vector::from_column_slice(diag)),
        }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    /// `<L c, L G>`.
    pub fn linear_map(&self, l: &Matrix) -> Result<Zonotope> {
        if l.ncols() != self.dim() {
            return Err(Error::dim("Zonotope::linear_map", self.dim(), l.ncols()));
        }
        Ok(Zonotope {
            center: l * &self.center,
            generators: l * &self.generators,
        })
    }

    pub fn negate(&self) -> Zonotope {
        Zonotope {
            center: -&self.center,
            generators: -&self.generators,
        }
    }

    /// `<c1 + c2, [G1, G2]>`.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope> {
        if other.dim() != self.dim() {
            return Err(Error::dim(
                "Zonotope::minkowski_sum",
                self.dim(),
                other.dim(),
            ));
        }
        Ok(Zonotope {
            center: &self.center + &other.center,
            generators: hstack(&self.generators, &other.generators),
        })
    }

    pub fn translate(&self, offset: &Vector) -> Result<Zonotope> {
        if offset.len() != self.dim() {
            return Err(Error::dim("Zonotope::translate", self.dim(), offset.len()));
        }
        Ok(Zonotope {
            center: &self.center + offset,
            generators: self.generators.clone(),
        })
    }

    /// Stacked centres and block-diagonal generators.
    pub fn cartesian_product(&self, other: &Zonotope) -> Zonotope {
        let (n1, g1) = self.generators.shape();
        let (n2, g2) = other.generators.shape();
        let mut center = Vector::zeros(n1 + n2);
        center.rows_mut(0, n1).copy_from(&self.center);
        center.rows_mut(n1, n2).copy_from(&other.center);
        let mut generators = Matrix::zeros(n1 + n2, g1 + g2);
        generators
            .view_mut((0, 0), (n1, g1))
            .copy_from(&self.generators);
        generators
            .view_mut((n1, g1), (n2, g2))
            .copy_from(&other.generators);
        Zonotope { center, generators }
    }

    /// Multiply every generator by `factor`, keeping the centre.
    pub fn scale_generators(&self, factor: f64) -> Zonotope {
        Zonotope {
            center: self.center.clone(),
            generators: &self.generators * factor,
        }
    }

    /// Same set with fewer columns: zero generators are dropped and
    /// generators along a single axis are merged (their absolute values add).
    /// Both rewrites are exact.
    pub fn compact(&self) -> Zonotope {
        let n = self.dim();
        let mut axis = vec![0.0; n];
        let mut general: Vec<usize> = Vec::new();
        for (j, col) in self.generators.column_iter().enumerate() {
            let nonzero: Vec<usize> = (0..n).filter(|&i| col[i] != 0.0).collect();
            match nonzero.as_slice() {
                [] => {}
                [i] => axis[*i] += col[*i].abs(),
                _ => general.push(j),
            }
        }
        let diag: Vec<usize> = (0..n).filter(|&i| axis[i] != 0.0).collect();
        let mut generators = Matrix::zeros(n, general.len() + diag.len());
        for (k, &j) in general.iter().enumerate() {
            generators.set_column(k, &self.generators.column(j));
        }
        for (k, &i) in diag.iter().enumerate() {
            generators[(i, general.len() + k)] = axis[i];
        }
        Zonotope {
            center: self.center.clone(),
            generators,
        }
    }

    /// Tight box hull: `c -/+ |G| 1`.
    pub fn interval_hull(&self) -> Interval {
        let radius = Vector::from_iterator(
            self.dim(),
            self.generators
                .row_iter()
                .map(|r| r.iter().map(|g| g.abs()).sum::<f64>()),
        );
        Interval {
            lower: &self.center - &radius,
            upper: &self.center + &radius,
        }
    }

    /// `c + G z` with `z` uniform on `[-1, 1]^{n_g}`. This is uniform over the
    /// generator cube, not over the set's volume.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_iterator(
            self.num_generators(),
            (0..self.num_generators()).map(|_| rng.random_range(-1.0..=1.0)),
        );
        &self.center + &self.generators * z
    }

    pub fn to_constrained(&self) -> ConstrainedZonotope {
        ConstrainedZonotope {
            center: self.center.clone(),
            generators: self.generators.clone(),
            con_matrix: Matrix::zeros(0, self.num_generators()),
            con_vector: Vector::zeros(0),
        }
    }

    /// Point membership decided by the emptiness LP: `p` is inside when
    /// `c + G z = p` has a solution with `||z||_inf <= 1 + margin`.
    pub fn contains(&self, p: &Vector, margin: f64) -> bool {
        self.to_constrained().contains(p, margin)
    }
}

impl From<&Interval> for Zonotope {
    fn from(i: &Interval) -> Self {
        interval_to_zonotope(i)
    }
}

/// Centre `(l + u) / 2`, generators `diag((u - l) / 2)`.
pub fn interval_to_zonotope(i: &Interval) -> Zonotope {
    Zonotope {
        center: i.center(),
        generators: Matrix::from_diagonal(&((&i.upper - &i.lower) * 0.5)),
    }
}

/// Constrained zonotope `{c + G z : A z = b, ||z||_inf <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedZonotope {
    center: Vector,
    generators: Matrix,
    con_matrix: Matrix,
    con_vector: Vector,
}

impl ConstrainedZonotope {
    pub fn new(
        center: Vector,
        generators: Matrix,
        con_matrix: Matrix,
        con_vector: Vector,
    ) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::dim(
                "ConstrainedZonotope::new",
                center.len(),
                generators.nrows(),
            ));
        }
        if con_matrix.ncols() != generators.ncols() {
            return Err(Error::dim(
                "ConstrainedZonotope::new (constraint columns)",
                generators.ncols(),
                con_matrix.ncols(),
            ));
        }
        if con_matrix.nrows() != con_vector.len() {
            return Err(Error::dim(
                "ConstrainedZonotope::new (constraint rows)",
                con_matrix.nrows(),
                con_vector.len(),
            ));
        }
        Ok(Self {
            center,
            generators,
            con_matrix,
            con_vector,
        })
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn con_matrix(&self) -> &Matrix {
        &self.con_matrix
    }

    pub fn con_vector(&self) -> &Vector {
        &self.con_vector
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.con_matrix.nrows()
    }

    pub fn linear_map(&self, l: &Matrix) -> Result<ConstrainedZonotope> {
        if l.ncols() != self.dim() {
            return Err(Error::dim(
                "ConstrainedZonotope::linear_map",
                self.dim(),
                l.ncols(),
            ));
        }
        Ok(ConstrainedZonotope {
            center: l * &self.center,
            generators: l * &self.generators,
            con_matrix: self.con_matrix.clone(),
            con_vector: self.con_vector.clone(),
        })
    }

    /// Minkowski sum with a plain zonotope; the new factors are unconstrained.
    pub fn minkowski_sum_zonotope(&self, z: &Zonotope) -> Result<ConstrainedZonotope> {
        if z.dim() != self.dim() {
            return Err(Error::dim(
                "ConstrainedZonotope::minkowski_sum_zonotope",
                self.dim(),
                z.dim(),
            ));
        }
        let extra = z.num_generators();
        Ok(ConstrainedZonotope {
            center: &self.center + &z.center,
            generators: hstack(&self.generators, &z.generators),
            con_matrix: hstack(
                &self.con_matrix,
                &Matrix::zeros(self.num_constraints(), extra),
            ),
            con_vector: self.con_vector.clone(),
        })
    }

    /// Intersection `<c1, [G1 0], [A1 0; 0 A2; G1 -G2], [b1; b2; c2 - c1]>`.
    pub fn intersect(&self, other: &ConstrainedZonotope) -> Result<ConstrainedZonotope> {
        conzono_intersect(self, other)
    }

    /// The emptiness problem `A z = b` for this set's own constraints.
    pub fn emptiness_problem(&self) -> EmptinessProblem {
        EmptinessProblem::new(self.con_matrix.clone(), self.con_vector.clone())
    }

    /// Membership LP: stack `G z = p - c` on top of `A z = b`.
    pub fn contains(&self, p: &Vector, margin: f64) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        let n = self.dim();
        let nc = self.num_constraints();
        let ng = self.num_generators();
        let mut a = Matrix::zeros(n + nc, ng);
        a.view_mut((0, 0), (n, ng)).copy_from(&self.generators);
        a.view_mut((n, 0), (nc, ng)).copy_from(&self.con_matrix);
        let mut b = Vector::zeros(n + nc);
        b.rows_mut(0, n).copy_from(&(p - &self.center));
        b.rows_mut(n, nc).copy_from(&self.con_vector);
        let sol = lincheck::emptiness_lp(&EmptinessProblem::new(a, b));
        sol.status == LpStatus::Optimal && sol.v_star <= 1.0 + margin
    }

    /// True when the emptiness LP proves the set empty. Sets without
    /// constraints are never empty.
    pub fn is_empty(&self) -> bool {
        if self.num_constraints() == 0 {
            return false;
        }
        let sol = lincheck::emptiness_lp(&self.emptiness_problem());
        match sol.status {
            LpStatus::Optimal => sol.v_star > 1.0,
            LpStatus::Infeasible => true,
            LpStatus::TimeLimit => false,
        }
    }
}

impl From<&Zonotope> for ConstrainedZonotope {
    fn from(z: &Zonotope) -> Self {
        z.to_constrained()
    }
}

/// Constrained-zonotope intersection. The result lives in the first
/// operand's factor space extended by the second's.
pub fn conzono_intersect(
    z1: &ConstrainedZonotope,
    z2: &ConstrainedZonotope,
) -> Result<ConstrainedZonotope> {
    if z1.dim() != z2.dim() {
        return Err(Error::dim("conzono_intersect", z1.dim(), z2.dim()));
    }
    let n = z1.dim();
    let (g1, g2) = (z1.num_generators(), z2.num_generators());
    let (c1, c2) = (z1.num_constraints(), z2.num_constraints());

    let mut generators = Matrix::zeros(n, g1 + g2);
    generators
        .view_mut((0, 0), (n, g1))
        .copy_from(&z1.generators);

    let mut con_matrix = Matrix::zeros(c1 + c2 + n, g1 + g2);
    con_matrix
        .view_mut((0, 0), (c1, g1))
        .copy_from(&z1.con_matrix);
    con_matrix
        .view_mut((c1, g1), (c2, g2))
        .copy_from(&z2.con_matrix);
    con_matrix
        .view_mut((c1 + c2, 0), (n, g1))
        .copy_from(&z1.generators);
    con_matrix
        .view_mut((c1 + c2, g1), (n, g2))
        .copy_from(&(-&z2.generators));

    let mut con_vector = Vector::zeros(c1 + c2 + n);
    con_vector.rows_mut(0, c1).copy_from(&z1.con_vector);
    con_vector.rows_mut(c1, c2).copy_from(&z2.con_vector);
    con_vector
        .rows_mut(c1 + c2, n)
        .copy_from(&(&z2.center - &z1.center));

    Ok(ConstrainedZonotope {
        center: z1.center.clone(),
        generators,
        con_matrix,
        con_vector,
    })
}

/// Polytope `{x : H x <= f}` clipped to `bounding_box`, as a constrained
/// zonotope. Starts from the box and intersects one halfspace at a time; each
/// halfspace adds one slack generator and one constraint row.
pub fn halfspaces_to_conzono(
    h: &Matrix,
    f: &Vector,
    bounding_box: &Interval,
) -> Result<ConstrainedZonotope> {
    let n = bounding_box.dim();
    if h.nrows() != f.len() {
        return Err(Error::dim(
            "halfspaces_to_conzono (rows)",
            h.nrows(),
            f.len(),
        ));
    }
    if h.nrows() > 0 && h.ncols() != n {
        return Err(Error::dim("halfspaces_to_conzono (columns)", n, h.ncols()));
    }
    let mut set = interval_to_zonotope(bounding_box).to_constrained();
    for k in 0..h.nrows() {
        set = intersect_halfspace(&set, &h.row(k).transpose(), f[k])?;
    }
    if set.num_constraints() > 0 && set.is_empty() {
        return Err(Error::EmptyPolytope);
    }
    Ok(set)
}

/// One halfspace `h^T x <= f`. With `d = f - h^T c + ||h^T G||_1` the new row
/// reads `h^T G z + (d/2) s = f - h^T c - d/2`, which pins `h^T x` into
/// `[f - d, f]` where `f - d` is the set's lower support in direction `h`.
fn intersect_halfspace(
    set: &ConstrainedZonotope,
    h: &Vector,
    f: f64,
) -> Result<ConstrainedZonotope> {
    let hg = h.transpose() * &set.generators;
    let hc = h.dot(&set.center);
    let d = f - hc + hg.iter().map(|v| v.abs()).sum::<f64>();
    if d < 0.0 {
        return Err(Error::EmptyPolytope);
    }
    let (n, ng) = set.generators.shape();
    let nc = set.num_constraints();

    let generators = hstack(&set.generators, &Matrix::zeros(n, 1));
    let mut con_matrix = Matrix::zeros(nc + 1, ng + 1);
    con_matrix
        .view_mut((0, 0), (nc, ng))
        .copy_from(&set.con_matrix);
    con_matrix.view_mut((nc, 0), (1, ng)).copy_from(&hg);
    con_matrix[(nc, ng)] = 0.5 * d;
    let mut con_vector = Vector::zeros(nc + 1);
    con_vector.rows_mut(0, nc).copy_from(&set.con_vector);
    con_vector[nc] = f - hc - 0.5 * d;

    Ok(ConstrainedZonotope {
        center: set.center.clone(),
        generators,
        con_matrix,
        con_vector,
    })
}

pub(crate) fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}
