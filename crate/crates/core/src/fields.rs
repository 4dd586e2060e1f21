//! Cell-centered grid fields and the operators shared by the solver, the
//! networks and the losses.
//!
//! Dims are listed x first. Values are stored with x fastest; vector fields
//! hold one contiguous plane per component (x, then y, then z). The same
//! layout, as little-endian `f32`, is the on-disk field format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use smokestep_tensor::{kernels, Scalar, Tensor};

use crate::error::{Error, Result};

/// Smallest admissible extent along any axis.
pub const MIN_EXTENT: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GridSpec {
    dims: Vec<usize>,
}

impl TryFrom<Vec<usize>> for GridSpec {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        GridSpec::new(&dims)
    }
}

impl From<GridSpec> for Vec<usize> {
    fn from(g: GridSpec) -> Self {
        g.dims
    }
}

impl GridSpec {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::InvalidGrid(format!(
                "expected 2 or 3 extents, got {}",
                dims.len()
            )));
        }
        if let Some(&e) = dims.iter().find(|&&e| e < MIN_EXTENT) {
            return Err(Error::InvalidGrid(format!(
                "extent {e} below minimum {MIN_EXTENT} in {dims:?}"
            )));
        }
        Ok(GridSpec { dims: dims.to_vec() })
    }

    /// Grid without the minimum-extent check, for tiny unit-test fixtures.
    pub fn unchecked(dims: &[usize]) -> Self {
        assert!((2..=3).contains(&dims.len()) && dims.iter().all(|&e| e > 0));
        GridSpec { dims: dims.to_vec() }
    }

    pub fn square(d: usize, n: usize) -> Result<Self> {
        GridSpec::new(&vec![n; d])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// `[depth, height, width]` as used by the kernels (depth 1 in 2D).
    pub fn sp3(&self) -> [usize; 3] {
        let z = if self.d() == 3 { self.dims[2] } else { 1 };
        [z, self.dims[1], self.dims[0]]
    }

    /// Tensor shape for `channels` planes on this grid.
    pub fn tensor_shape(&self, channels: usize) -> Vec<usize> {
        let mut s = vec![channels];
        s.extend(self.dims.iter().rev());
        s
    }

    /// Flat index of the cell with per-axis indices `cell` (x first).
    pub fn index(&self, cell: &[usize]) -> usize {
        let mut i = 0;
        for a in (0..self.d()).rev() {
            i = i * self.dims[a] + cell[a];
        }
        i
    }

    /// Per-axis indices (x first) of flat cell `i`.
    pub fn cell(&self, mut i: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for (a, &n) in self.dims.iter().enumerate() {
            c[a] = i % n;
            i /= n;
        }
        c
    }

    /// True for cells on the outermost layer of the domain.
    pub fn on_boundary(&self, i: usize) -> bool {
        let c = self.cell(i);
        (0..self.d()).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::IncompatibleGrids {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(())
    }
}

/// Common view over scalar, vector and Jacobian fields.
pub trait Field {
    fn spec(&self) -> &GridSpec;
    fn values(&self) -> &[f32];
    fn components(&self) -> usize;

    fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            self.spec().tensor_shape(self.components()),
            self.values().iter().map(|&v| T::from_f64_lossy(v as f64)).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f32>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        check_len(&spec, 1, values.len())?;
        Ok(ScalarField { spec, values })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: &GridSpec, c: f32) -> Self {
        ScalarField {
            values: vec![c; spec.num_cells()],
            spec: spec.clone(),
        }
    }

    /// Field with `f(x, y, z)` evaluated at every cell center.
    pub fn from_fn(spec: &GridSpec, f: impl Fn([usize; 3]) -> f32) -> Self {
        let values = (0..spec.num_cells()).map(|i| f(spec.cell(i))).collect();
        ScalarField {
            spec: spec.clone(),
            values,
        }
    }

    pub fn from_tensor<T: Scalar>(spec: &GridSpec, t: &Tensor<T>) -> Result<Self> {
        check_len(spec, 1, t.len())?;
        Self::new(spec.clone(), t.data().iter().map(|v| v.as_f64() as f32).collect())
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn at(&self, cell: &[usize]) -> f32 {
        self.values[self.spec.index(cell)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        ScalarField {
            spec: self.spec.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp_nonnegative(&self) -> Self {
        self.map(|v| v.max(0.0))
    }
}

impl Field for ScalarField {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn values(&self) -> &[f32] {
        &self.values
    }
    fn components(&self) -> usize {
        1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    spec: GridSpec,
    values: Vec<f32>,
}

impl VectorField {
    pub fn new(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        check_len(&spec, spec.d(), values.len())?;
        Ok(VectorField { spec, values })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        VectorField {
            values: vec![0.0; spec.d() * spec.num_cells()],
            spec: spec.clone(),
        }
    }

    pub fn constant(spec: &GridSpec, v: &[f32]) -> Self {
        assert_eq!(v.len(), spec.d());
        Self::from_fn(spec, |_| v.to_vec())
    }

    /// Field whose components at each cell are `f(x, y, z)`.
    pub fn from_fn(spec: &GridSpec, f: impl Fn([usize; 3]) -> Vec<f32>) -> Self {
        let n = spec.num_cells();
        let d = spec.d();
        let mut values = vec![0.0; d * n];
        for i in 0..n {
            let v = f(spec.cell(i));
            for c in 0..d {
                values[c * n + i] = v[c];
            }
        }
        VectorField {
            spec: spec.clone(),
            values,
        }
    }

    pub fn from_tensor<T: Scalar>(spec: &GridSpec, t: &Tensor<T>) -> Result<Self> {
        check_len(spec, spec.d(), t.len())?;
        Self::new(spec.clone(), t.data().iter().map(|v| v.as_f64() as f32).collect())
    }

    pub fn component(&self, c: usize) -> &[f32] {
        let n = self.spec.num_cells();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.spec.num_cells();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        VectorField {
            spec: self.spec.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Root mean square over all cells and components.
    pub fn rms(&self) -> f64 {
        let ss: f64 = self.values.iter().map(|&v| (v as f64) * (v as f64)).sum();
        (ss / self.values.len() as f64).sqrt()
    }
}

impl Field for VectorField {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn values(&self) -> &[f32] {
        &self.values
    }
    fn components(&self) -> usize {
        self.spec.d()
    }
}

/// Per-cell displacement in grid cells, used for backward warping.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField(pub VectorField);

impl FlowField {
    pub fn zeros(spec: &GridSpec) -> Self {
        FlowField(VectorField::zeros(spec))
    }

    pub fn constant(spec: &GridSpec, v: &[f32]) -> Self {
        FlowField(VectorField::constant(spec, v))
    }

    pub fn as_vector(&self) -> &VectorField {
        &self.0
    }
}

impl Field for FlowField {
    fn spec(&self) -> &GridSpec {
        self.0.spec()
    }
    fn values(&self) -> &[f32] {
        self.0.values()
    }
    fn components(&self) -> usize {
        self.0.components()
    }
}

/// Per-cell `d×d` Jacobian; component `c·d + a` holds `∂v_c/∂x_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    spec: GridSpec,
    values: Vec<f32>,
}

impl Jacobian {
    pub fn entry(&self, c: usize, a: usize) -> &[f32] {
        let n = self.spec.num_cells();
        let k = c * self.spec.d() + a;
        &self.values[k * n..(k + 1) * n]
    }
}

impl Field for Jacobian {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn values(&self) -> &[f32] {
        &self.values
    }
    fn components(&self) -> usize {
        self.spec.d() * self.spec.d()
    }
}

/// Generic same-layout field returned by [`time_concat_diff`].
#[derive(Clone, Debug, PartialEq)]
pub struct RawField {
    spec: GridSpec,
    components: usize,
    values: Vec<f32>,
}

impl Field for RawField {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn values(&self) -> &[f32] {
        &self.values
    }
    fn components(&self) -> usize {
        self.components
    }
}

fn check_len(spec: &GridSpec, components: usize, len: usize) -> Result<()> {
    let want = components * spec.num_cells();
    if len != want {
        return Err(Error::InvalidGrid(format!(
            "{len} values for a {components}-component field on {:?} (expected {want})",
            spec.dims()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Argument(format!("unknown axis {other:?}"))),
        }
    }
}

/// Multilinear interpolation of cell-centered values; positions are in cell
/// units (cell `i` centered at `i`) and clamp to the outermost centers.
pub fn sample(field: &ScalarField, position: &[f64]) -> f32 {
    assert_eq!(position.len(), field.spec.d(), "position needs one coordinate per axis");
    sample_plane(&field.values, &field.spec, position) as f32
}

pub(crate) fn sample_plane(plane: &[f32], spec: &GridSpec, position: &[f64]) -> f64 {
    let mut pos = [0.0f64; 3];
    pos[..position.len()].copy_from_slice(position);
    let mut acc = 0.0f64;
    for (i, w) in kernels::stencil(spec.sp3(), pos) {
        if w != 0.0 {
            acc += w * plane[i] as f64;
        }
    }
    acc
}

/// Backward warp: `out(x) = sample(rho, x − flow(x))`.
pub fn warp(rho: &ScalarField, flow: &FlowField) -> Result<ScalarField> {
    rho.spec.ensure_same(flow.spec())?;
    let d = rho.spec.d();
    let out = kernels::warp(&rho.values, 1, flow.values(), d, rho.spec.sp3());
    ScalarField::new(rho.spec.clone(), out)
}

/// Central differences inside, one-sided differences on boundary cells.
pub fn gradient(field: &VectorField) -> Jacobian {
    let d = field.spec.d();
    Jacobian {
        spec: field.spec.clone(),
        values: kernels::jacobian(&field.values, d, field.spec.sp3()),
    }
}

/// Trace of [`gradient`].
pub fn divergence(vel: &VectorField) -> ScalarField {
    let spec = &vel.spec;
    let n = spec.num_cells();
    let mut out = vec![0.0f32; n];
    let mut tmp = vec![0.0f32; n];
    for a in 0..spec.d() {
        kernels::diff_axis(vel.component(a), spec.sp3(), a, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
    ScalarField {
        spec: spec.clone(),
        values: out,
    }
}

/// Mean along `axis` of a 3D field. The 2D result keeps the remaining axes
/// in their original order (z-projection → (x, y); y → (x, z); x → (y, z)).
pub fn project_mean(field: &ScalarField, axis: Axis) -> Result<ScalarField> {
    if field.spec.d() != 3 {
        return Err(Error::Dimension(format!(
            "project_mean needs a 3D field, got {}D",
            field.spec.d()
        )));
    }
    let sp = field.spec.sp3();
    let [r, s] = kernels::projected_dims(sp, axis.index());
    let values = kernels::project_mean(&field.values, 1, sp, axis.index());
    let spec = GridSpec::unchecked(&[s, r]);
    ScalarField::new(spec, values)
}

/// Discrete time derivative of the two-frame sequence `(a, b)`: `b − a`.
pub fn time_concat_diff<F: Field>(a: &F, b: &F) -> Result<RawField> {
    a.spec().ensure_same(b.spec())?;
    if a.components() != b.components() {
        return Err(Error::Dimension("component count mismatch".into()));
    }
    Ok(RawField {
        spec: a.spec().clone(),
        components: a.components(),
        values: a.values().iter().zip(b.values()).map(|(x, y)| y - x).collect(),
    })
}

/// Writes raw little-endian `f32` values.
pub fn write_raw(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

/// Reads exactly `expected` little-endian `f32` values.
pub fn read_raw(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("holds {} bytes, expected {}", bytes.len(), expected * 4),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
