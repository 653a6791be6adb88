//! Subspaces of the embedding space: axis-aligned hyper-rectangles,
//! optionally expressed in an eigenspace-rotated frame.
//!
//! Rotations use the row-vector convention. A point `x` maps to rect
//! coordinates as `y = (x − center)·A` and back as `x = y·Aᵀ + center`.

mod kmeans;
mod semantic;
mod shrink;
mod svd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::embed::EmbeddingMatrix;
use crate::scalar::Scalar;

pub use kmeans::{kmeans, kmeans_detailed, KMeansFit, KMEANS_MAX_ITERATIONS, KMEANS_TOLERANCE};
pub use semantic::{semantic_subspaces, SemanticOptions};
pub use shrink::{shrink, shrink_traced, Side, ShrinkStep, DEFAULT_SHRINK_DELTA};
pub use svd::{rotation_of, singular_value_decomposition, Svd};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty embedding matrix")]
    EmptyMatrix,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lower bound exceeds upper bound in dimension {0}")]
    InvertedBounds(usize),
    #[error("non-finite bound in dimension {0}")]
    NonFinite(usize),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("rotation needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("rotation matrix is not orthogonal (Frobenius error {0:e})")]
    NotOrthogonal(f64),
    #[error("rotation must be square with side {0}")]
    NotSquare(usize),
    #[error("cluster count {k} must be within 1..={rows}")]
    BadClusterCount { k: usize, rows: usize },
    #[error("wrong-class point {0} cannot be excluded: every dimension is degenerate")]
    CannotExclude(usize),
    #[error("no embedding for id '{0}'")]
    MissingEmbedding(String),
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
}

/// Axis-aligned hyper-rectangle with inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AxisRect<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> AxisRect<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(GeometryError::NonFinite(j));
            }
            if l > u {
                return Err(GeometryError::InvertedBounds(j));
            }
        }
        Ok(AxisRect { lower, upper })
    }

    /// Degenerate rectangle holding a single point.
    pub fn point(x: &[T]) -> Self {
        AxisRect {
            lower: x.to_vec(),
            upper: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> T {
        self.upper[j] - self.lower[j]
    }

    pub fn center(&self) -> Vec<T> {
        let two = T::of(2.0);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) / two)
            .collect()
    }

    /// Inclusive membership; `x` must have the rect's dimension.
    pub fn contains_point(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn clamp(&self, x: &mut [T]) {
        for (v, (&l, &u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(l).min(u);
        }
    }

    /// Index of the widest dimension (lowest index on ties).
    pub fn widest_dim(&self) -> usize {
        (0..self.dim()).fold(0, |best, j| if self.width(j) > self.width(best) { j } else { best })
    }

    /// Halves the rect at the midpoint of dimension `j`.
    pub fn split(&self, j: usize) -> (Self, Self) {
        let mid = self.lower[j] + self.width(j) / T::of(2.0);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[j] = mid;
        right.lower[j] = mid;
        (left, right)
    }

    pub(crate) fn set_lower(&mut self, j: usize, v: T) {
        debug_assert!(v <= self.upper[j]);
        self.lower[j] = v;
    }

    pub(crate) fn set_upper(&mut self, j: usize, v: T) {
        debug_assert!(v >= self.lower[j]);
        self.upper[j] = v;
    }
}

/// Column-wise `(min, max)` of an embedding matrix.
pub fn hrect_of<T: Scalar>(x: &EmbeddingMatrix<T>) -> Result<AxisRect<T>, GeometryError> {
    if x.is_empty() {
        return Err(GeometryError::EmptyMatrix);
    }
    let mut lower = x.row(0).to_vec();
    let mut upper = lower.clone();
    for row in x.iter_rows().skip(1) {
        for (j, &v) in row.iter().enumerate() {
            lower[j] = lower[j].min(v);
            upper[j] = upper[j].max(v);
        }
    }
    AxisRect::new(lower, upper)
}

/// ℓ∞ ball `[x_j − ε, x_j + ε]` around `x`.
pub fn eps_cube<T: Scalar>(x: &[T], eps: T) -> Result<AxisRect<T>, GeometryError> {
    if !(eps > T::zero()) {
        return Err(GeometryError::NonPositiveEpsilon(eps.to_f()));
    }
    AxisRect::new(
        x.iter().map(|&v| v - eps).collect(),
        x.iter().map(|&v| v + eps).collect(),
    )
}

/// Orthogonal change of basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation<T> {
    dim: usize,
    /// Row-major `m × m`.
    matrix: Vec<T>,
}

impl<T: Scalar> Rotation<T> {
    pub fn new(dim: usize, matrix: Vec<T>) -> Result<Self, GeometryError> {
        if matrix.len() != dim * dim {
            return Err(GeometryError::NotSquare(dim));
        }
        let r = Rotation { dim, matrix };
        let err = r.orthogonality_error();
        if !(err <= T::orthogonality_tolerance()) {
            return Err(GeometryError::NotOrthogonal(err.to_f()));
        }
        Ok(r)
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![T::zero(); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = T::one();
        }
        Rotation { dim, matrix }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, GeometryError> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(GeometryError::NotSquare(dim));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.matrix[i * self.dim + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.matrix.chunks(self.dim).map(<[T]>::to_vec).collect()
    }

    /// ‖A·Aᵀ − I‖_F.
    pub fn orthogonality_error(&self) -> T {
        let m = self.dim;
        let mut acc = T::zero();
        for i in 0..m {
            for k in 0..m {
                let mut s = T::zero();
                for j in 0..m {
                    s += self.get(i, j) * self.get(k, j);
                }
                let target = if i == k { T::one() } else { T::zero() };
                acc += (s - target) * (s - target);
            }
        }
        acc.sqrt()
    }

    /// `x·A`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let m = self.dim;
        let mut y = vec![T::zero(); m];
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.matrix[i * m..(i + 1) * m];
            for (yj, &a) in y.iter_mut().zip(row) {
                *yj += xi * a;
            }
        }
        y
    }

    /// `y·Aᵀ`.
    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        let m = self.dim;
        (0..m)
            .map(|i| {
                self.matrix[i * m..(i + 1) * m]
                    .iter()
                    .zip(y)
                    .map(|(&a, &v)| a * v)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubspaceMeta {
    /// Construction method, e.g. `eps_cube`, `hrect`, `semantic`, `cluster`,
    /// with `+shrink` appended when shrinking was applied.
    pub construction: String,
    pub origin_ids: Vec<String>,
}

/// A hyper-rectangle in (optionally rotated) coordinates with its
/// designated class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "T: Scalar",
    try_from = "SubspaceFile<T>",
    into = "SubspaceFile<T>"
)]
pub struct Subspace<T: Scalar> {
    pub class: Label,
    rect: AxisRect<T>,
    rotation: Option<Rotation<T>>,
    center: Option<Vec<T>>,
    pub meta: SubspaceMeta,
}

/// How an enclosing subspace is rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationMode {
    #[default]
    None,
    /// SVD of the mean-centered rows; the mean is stored as the center.
    Centered,
    /// SVD of the raw rows, `X_rot = X·A`.
    Uncentered,
}

impl<T: Scalar> Subspace<T> {
    pub fn axis_aligned(class: Label, rect: AxisRect<T>, meta: SubspaceMeta) -> Self {
        Subspace {
            class,
            rect,
            rotation: None,
            center: None,
            meta,
        }
    }

    pub fn rotated(
        class: Label,
        rect: AxisRect<T>,
        rotation: Rotation<T>,
        center: Option<Vec<T>>,
        meta: SubspaceMeta,
    ) -> Result<Self, GeometryError> {
        let m = rect.dim();
        if rotation.dim() != m {
            return Err(GeometryError::DimensionMismatch {
                expected: m,
                found: rotation.dim(),
            });
        }
        if let Some(c) = &center {
            if c.len() != m {
                return Err(GeometryError::DimensionMismatch {
                    expected: m,
                    found: c.len(),
                });
            }
        }
        Ok(Subspace {
            class,
            rect,
            rotation: Some(rotation),
            center,
            meta,
        })
    }

    /// The (optionally rotated) hyper-rectangle over every row of `x`.
    /// Rotation needs two rows; a single row yields an axis-aligned point.
    pub fn enclosing(
        x: &EmbeddingMatrix<T>,
        class: Label,
        mode: RotationMode,
        meta: SubspaceMeta,
    ) -> Result<Self, GeometryError> {
        if mode == RotationMode::None || x.rows() < 2 {
            return Ok(Self::axis_aligned(class, hrect_of(x)?, meta));
        }
        let (rotation, center) = rotation_of(x, mode == RotationMode::Centered)?;
        let mut local = EmbeddingMatrix::new(x.dim());
        for (id, row) in x.row_ids().iter().zip(x.iter_rows()) {
            let shifted: Vec<T> = match &center {
                Some(c) => row.iter().zip(c).map(|(&v, &m)| v - m).collect(),
                None => row.to_vec(),
            };
            local
                .push(id.clone(), &rotation.apply(&shifted))
                .expect("same dimension");
        }
        Self::rotated(class, hrect_of(&local)?, rotation, center, meta)
    }

    pub fn dim(&self) -> usize {
        self.rect.dim()
    }

    pub fn rect(&self) -> &AxisRect<T> {
        &self.rect
    }

    pub fn rotation(&self) -> Option<&Rotation<T>> {
        self.rotation.as_ref()
    }

    pub fn center(&self) -> Option<&[T]> {
        self.center.as_deref()
    }

    pub fn with_rect(&self, rect: AxisRect<T>) -> Self {
        Subspace {
            rect,
            ..self.clone()
        }
    }

    /// Rect coordinates of `x`.
    pub fn to_local(&self, x: &[T]) -> Vec<T> {
        match &self.rotation {
            None => x.to_vec(),
            Some(a) => {
                let shifted: Vec<T> = match &self.center {
                    Some(c) => x.iter().zip(c).map(|(&v, &m)| v - m).collect(),
                    None => x.to_vec(),
                };
                a.apply(&shifted)
            }
        }
    }

    /// Embedding-space coordinates of a rect point `y`.
    pub fn to_global(&self, y: &[T]) -> Vec<T> {
        match &self.rotation {
            None => y.to_vec(),
            Some(a) => {
                let mut x = a.apply_transpose(y);
                if let Some(c) = &self.center {
                    for (v, &m) in x.iter_mut().zip(c) {
                        *v += m;
                    }
                }
                x
            }
        }
    }

    /// Inclusive membership in rect coordinates.
    ///
    /// For rotated subspaces the comparison admits a rounding slack of
    /// `(m + 4)·ε·(1 + ‖x − center‖₁)`, the error bound of the change of
    /// basis, so points produced by mapping rect points back into the
    /// embedding space remain members.
    pub fn contains(&self, x: &[T]) -> Result<bool, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if self.rotation.is_none() {
            return Ok(self.rect.contains_point(x));
        }
        let slack = self.membership_slack(x);
        let y = self.to_local(x);
        Ok(within(&self.rect, &y, slack))
    }

    /// Rounding allowance used by [`Subspace::contains`]; zero for
    /// axis-aligned subspaces.
    pub fn membership_slack(&self, x: &[T]) -> T {
        if self.rotation.is_none() {
            return T::zero();
        }
        let l1: T = match &self.center {
            Some(c) => x.iter().zip(c).map(|(&v, &m)| (v - m).abs()).sum(),
            None => x.iter().map(|v| v.abs()).sum(),
        };
        T::of(self.dim() as f64 + 4.0) * T::epsilon() * (T::one() + l1)
    }

    pub fn log_volume(&self) -> LogVolume<T> {
        log_volume(&self.rect)
    }
}

fn within<T: Scalar>(rect: &AxisRect<T>, y: &[T], slack: T) -> bool {
    y.iter()
        .zip(rect.lower.iter().zip(&rect.upper))
        .all(|(&v, (&l, &u))| l - slack <= v && v <= u + slack)
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct SubspaceFile<T> {
    class: Label,
    dim: usize,
    lower: Vec<T>,
    upper: Vec<T>,
    rotation: Option<Vec<Vec<T>>>,
    center: Option<Vec<T>>,
    #[serde(default)]
    meta: SubspaceMeta,
}

impl<T: Scalar> From<Subspace<T>> for SubspaceFile<T> {
    fn from(s: Subspace<T>) -> Self {
        SubspaceFile {
            class: s.class,
            dim: s.rect.dim(),
            rotation: s.rotation.as_ref().map(Rotation::to_rows),
            lower: s.rect.lower,
            upper: s.rect.upper,
            center: s.center,
            meta: s.meta,
        }
    }
}

impl<T: Scalar> TryFrom<SubspaceFile<T>> for Subspace<T> {
    type Error = GeometryError;

    fn try_from(f: SubspaceFile<T>) -> Result<Self, GeometryError> {
        let rect = AxisRect::new(f.lower, f.upper)?;
        if rect.dim() != f.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: f.dim,
                found: rect.dim(),
            });
        }
        match f.rotation {
            None => Ok(Subspace {
                class: f.class,
                rect,
                rotation: None,
                center: f.center,
                meta: f.meta,
            }),
            Some(rows) => {
                let rotation = Rotation::from_rows(&rows)?;
                Subspace::rotated(f.class, rect, rotation, f.center, f.meta)
            }
        }
    }
}

/// Base-10 log volume of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogVolume<T> {
    /// `Σ_j log10(upper_j − lower_j)`; `−∞` when degenerate.
    pub log10: T,
    /// At least one zero-width dimension.
    pub degenerate: bool,
}

impl<T: Scalar> LogVolume<T> {
    /// Linear volume when it is representable as a positive normal value
    /// (or exactly zero for degenerate rects).
    pub fn linear(&self) -> Option<T> {
        if self.degenerate {
            return Some(T::zero());
        }
        let v = T::of(10.0).powf(self.log10);
        (v.is_normal() && v > T::zero()).then_some(v)
    }
}

pub fn log_volume<T: Scalar>(rect: &AxisRect<T>) -> LogVolume<T> {
    let mut acc = T::zero();
    let mut degenerate = false;
    for j in 0..rect.dim() {
        let w = rect.width(j);
        if w > T::zero() {
            acc += w.log10();
        } else {
            degenerate = true;
        }
    }
    LogVolume {
        log10: if degenerate { T::neg_infinity() } else { acc },
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn hrect_examples() {
        let r = hrect_of(&matrix(&[&[3.0, -1.0]])).unwrap();
        assert_eq!(r.lower(), [3.0, -1.0]);
        assert_eq!(r.upper(), [3.0, -1.0]);

        let x = matrix(&[&[0.0, 2.0], &[1.0, 1.0]]);
        let r = hrect_of(&x).unwrap();
        assert_eq!(r.lower(), [0.0, 1.0]);
        assert_eq!(r.upper(), [1.0, 2.0]);

        let inside = matrix(&[&[0.0, 2.0], &[1.0, 1.0], &[0.5, 1.5]]);
        assert_eq!(hrect_of(&inside).unwrap(), r);
        assert_eq!(hrect_of(&EmbeddingMatrix::<f64>::new(2)), Err(GeometryError::EmptyMatrix));
    }

    #[test]
    fn eps_cube_volumes_match_reported_values() {
        let x = vec![0.123f64; 30];
        let small = eps_cube(&x, 0.005).unwrap();
        assert!((log_volume(&small).log10 + 60.0).abs() < 1e-9);
        let large = eps_cube(&x, 0.05).unwrap();
        assert!((log_volume(&large).log10 + 30.0).abs() < 1e-9);
        assert!(small.contains_point(&x));
        assert!(eps_cube(&x, 0.0).is_err());
        assert!(eps_cube(&x, -1.0).is_err());
    }

    #[test]
    fn unit_and_degenerate_volumes() {
        let unit = AxisRect::new(vec![0.0; 5], vec![1.0; 5]).unwrap();
        assert_eq!(log_volume(&unit).log10, 0.0);
        assert_eq!(log_volume(&unit).linear(), Some(1.0));
        let flat = AxisRect::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let v = log_volume(&flat);
        assert!(v.degenerate && v.log10 == f64::NEG_INFINITY);
        assert_eq!(v.linear(), Some(0.0));
        let tiny = eps_cube(&[0.0f32; 30], 0.005).unwrap();
        assert_eq!(log_volume(&tiny).linear(), None, "1e-60 underflows f32");
    }

    #[test]
    fn contains_is_inclusive() {
        let r = AxisRect::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let s = Subspace::axis_aligned(Label::Pos, r.clone(), SubspaceMeta::default());
        assert!(s.contains(r.lower()).unwrap());
        assert!(s.contains(r.upper()).unwrap());
        assert!(s.contains(&r.center()).unwrap());
        assert!(!s.contains(&[1.0 + 1e-12, 0.0]).unwrap());
        assert!(s.contains(&[0.0]).is_err());
    }

    const DIAGONAL: [[f64; 2]; 4] = [[1.0, 1.0], [-1.0, -1.0], [0.1, -0.1], [-0.1, 0.1]];

    fn diagonal() -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(&DIAGONAL.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn rotated_diagonal_area() {
        let x = diagonal();
        let axis = Subspace::enclosing(&x, Label::Pos, RotationMode::None, Default::default())
            .unwrap();
        let rot = Subspace::enclosing(&x, Label::Pos, RotationMode::Centered, Default::default())
            .unwrap();
        let area = |s: &Subspace<f64>| s.log_volume().linear().unwrap();
        assert!((area(&axis) - 4.0).abs() < 1e-6);
        assert!((area(&rot) - 0.8).abs() < 1e-6);
        for row in x.iter_rows() {
            assert!(rot.contains(row).unwrap());
        }
    }

    #[test]
    fn rotated_membership_by_hand() {
        // Singular directions (1,1)/√2 and (1,−1)/√2; the rect spans
        // |u| ≤ √2 along the first and |v| ≤ 0.1·√2 along the second.
        let rot = Subspace::enclosing(&diagonal(), Label::Pos, RotationMode::Centered, Default::default())
            .unwrap();
        let by_hand = |p: [f64; 2]| {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let u = (p[0] + p[1]) * s;
            let v = (p[0] - p[1]) * s;
            u.abs() <= 2f64.sqrt() + 1e-12 && v.abs() <= 0.1 * 2f64.sqrt() + 1e-12
        };
        for p in [[0.5, 0.5], [1.0, 0.9], [1.0, -1.0], [1.5, 1.5], [-0.9, -1.0], [0.0, 0.2]] {
            assert_eq!(rot.contains(&p).unwrap(), by_hand(p), "{p:?}");
        }
        assert!(rot.contains(&[1.0, 0.9]).unwrap(), "outside the axis box, inside the rotated one");
        assert!(!rot.contains(&[1.0, -1.0]).unwrap());
        assert!(!rot.contains(&[1.5, 1.5]).unwrap());
    }

    #[test]
    fn subspace_json_round_trips() {
        let rot = Subspace::enclosing(&diagonal(), Label::Neg, RotationMode::Centered, SubspaceMeta {
            construction: "semantic".into(),
            origin_ids: vec!["a".into()],
        })
        .unwrap();
        let json = serde_json::to_string(&rot).unwrap();
        assert!(json.contains("\"class\":\"neg\"") && json.contains("\"dim\":2"));
        let back: Subspace<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rot);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);

        let bad = r#"{"class":"pos","dim":2,"lower":[1,0],"upper":[0,0],"rotation":null,"center":null,"meta":{"construction":"x","origin_ids":[]}}"#;
        assert!(serde_json::from_str::<Subspace<f64>>(bad).is_err());
    }

    #[test]
    fn split_partitions_widest_dimension() {
        let r = AxisRect::new(vec![0.0, 0.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(r.widest_dim(), 1);
        let (a, b) = r.split(1);
        assert_eq!(a.upper()[1], 2.0);
        assert_eq!(b.lower()[1], 2.0);
    }
}
