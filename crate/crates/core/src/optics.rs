//! Transfer-matrix optics for planar multilayers, s-polarized light.
//!
//! The stack is described from the incidence side: ambient, layers
//! `1..=M`, exit ambient. The full-stack scattering matrix is the ordered
//! product `I(0,1) L(1) I(1,2) ... L(M) I(M,M+1)` of interface and layer
//! matrices; the amplitude coefficients follow from its first column.

use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::materials::{MaterialId, MaterialLibrary};

pub const GRID_START_NM: f64 = 400.0;
pub const GRID_END_NM: f64 = 800.0;
pub const GRID_LEN: usize = 401;

/// The fixed 400..=800 nm grid in 1 nm steps.
pub fn wavelength_grid() -> impl ExactSizeIterator<Item = f64> + Clone {
    (0..GRID_LEN).map(|i| GRID_START_NM + i as f64)
}

/// Transmittance sampled on [`wavelength_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != GRID_LEN {
            return Err(Error::schema(format!("spectrum must have {GRID_LEN} points, got {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite spectrum value {v}")));
        }
        Ok(Self { values })
    }

    /// Constant spectrum, mainly useful as a target or fixture.
    pub fn flat(value: f64) -> Self {
        Self { values: vec![value; GRID_LEN] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn wavelengths_nm(&self) -> impl Iterator<Item = f64> {
        wavelength_grid()
    }

    pub fn mse(&self, other: &Spectrum) -> f64 {
        mse_slices(&self.values, &other.values)
    }
}

pub(crate) fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrix2 {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
}

impl ComplexMatrix2 {
    pub const IDENTITY: Self = Self {
        m11: Complex64::new(1.0, 0.0),
        m12: Complex64::new(0.0, 0.0),
        m21: Complex64::new(0.0, 0.0),
        m22: Complex64::new(1.0, 0.0),
    };

    pub fn new(m11: Complex64, m12: Complex64, m21: Complex64, m22: Complex64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn det(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            (self.m11 - other.m11).norm(),
            (self.m12 - other.m12).norm(),
            (self.m21 - other.m21).norm(),
            (self.m22 - other.m22).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl Mul for ComplexMatrix2 {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self {
            m11: self.m11 * o.m11 + self.m12 * o.m21,
            m12: self.m11 * o.m12 + self.m12 * o.m22,
            m21: self.m21 * o.m11 + self.m22 * o.m21,
            m22: self.m21 * o.m12 + self.m22 * o.m22,
        }
    }
}

/// Ordered layers between two ambient media.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub thicknesses_nm: Vec<f64>,
    pub materials: Vec<MaterialId>,
    pub ambient_in: MaterialId,
    pub ambient_out: MaterialId,
    pub incidence_angle_rad: f64,
}

impl LayerStack {
    pub fn new(thicknesses_nm: Vec<f64>, materials: Vec<MaterialId>) -> Result<Self> {
        let stack = Self {
            thicknesses_nm,
            materials,
            ambient_in: MaterialId::Air,
            ambient_out: MaterialId::Air,
            incidence_angle_rad: 0.0,
        };
        stack.validate()?;
        Ok(stack)
    }

    /// Free-standing SiO2/TiO2 stack in air, SiO2 first on the incidence side.
    pub fn alternating(thicknesses_nm: Vec<f64>) -> Result<Self> {
        let materials = alternating_materials(thicknesses_nm.len());
        Self::new(thicknesses_nm, materials)
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty stack is valid")
    }

    pub fn with_ambients(mut self, ambient_in: MaterialId, ambient_out: MaterialId) -> Self {
        self.ambient_in = ambient_in;
        self.ambient_out = ambient_out;
        self
    }

    pub fn with_angle(mut self, incidence_angle_rad: f64) -> Self {
        self.incidence_angle_rad = incidence_angle_rad;
        self
    }

    pub fn len(&self) -> usize {
        self.thicknesses_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thicknesses_nm.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.thicknesses_nm.len() != self.materials.len() {
            return Err(Error::Validation(format!(
                "{} thicknesses but {} materials",
                self.thicknesses_nm.len(),
                self.materials.len()
            )));
        }
        if let Some(d) = self.thicknesses_nm.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::Validation(format!("layer thickness must be finite and >= 0, got {d}")));
        }
        Ok(())
    }
}

pub fn alternating_materials(layers: usize) -> Vec<MaterialId> {
    (0..layers)
        .map(|i| if i % 2 == 0 { MaterialId::SiO2 } else { MaterialId::TiO2 })
        .collect()
}

/// `k_z = k0 * sqrt(n^2 - (n0 sin theta)^2)` in rad/nm, on the branch with
/// non-negative imaginary part.
pub fn longitudinal_wavevector(n: Complex64, n0: f64, theta_rad: f64, wavelength_nm: f64) -> Complex64 {
    let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;
    let transverse = n0 * theta_rad.sin();
    let mut root = (n * n - transverse * transverse).sqrt();
    if root.im < 0.0 {
        root = -root;
    }
    root * k0
}

/// s-polarized Fresnel amplitude coefficients from medium `j` into medium `k`.
pub fn fresnel_s(kz_j: Complex64, kz_k: Complex64) -> Result<(Complex64, Complex64)> {
    let denom = kz_j + kz_k;
    if denom.norm() == 0.0 {
        return Err(Error::Domain("fresnel denominator k_z,j + k_z,k vanishes".into()));
    }
    Ok(((kz_j - kz_k) / denom, 2.0 * kz_j / denom))
}

/// `(1/t) [[1, r], [r, 1]]`.
pub fn interface_matrix(r: Complex64, t: Complex64) -> Result<ComplexMatrix2> {
    if t.norm() == 0.0 {
        return Err(Error::Domain("interface transmission coefficient is zero".into()));
    }
    let inv = t.inv();
    let off = r * inv;
    Ok(ComplexMatrix2::new(inv, off, off, inv))
}

/// Propagation through a layer: `diag(exp(-i k_z d), exp(+i k_z d))`.
pub fn layer_matrix(kz: Complex64, d_nm: f64) -> ComplexMatrix2 {
    let phase = Complex64::i() * kz * d_nm;
    ComplexMatrix2::new(
        (-phase).exp(),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        phase.exp(),
    )
}

/// `(r, t) = (S21 / S11, 1 / S11)`.
pub fn amplitude_coefficients(s: &ComplexMatrix2) -> Result<(Complex64, Complex64)> {
    if s.m11.norm() == 0.0 || !s.m11.is_finite() {
        return Err(Error::Domain(format!("singular stack: S11 = {}", s.m11)));
    }
    let inv = s.m11.inv();
    Ok((s.m21 * inv, inv))
}

/// Amplitude and power response of a stack at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub r: Complex64,
    pub t: Complex64,
    pub reflectance: f64,
    pub transmittance: f64,
}

/// Everything the matrix product needs, with indices already resolved.
struct ResolvedStack<'a> {
    n_in: Complex64,
    n_out: Complex64,
    layers: &'a [Complex64],
    thicknesses_nm: &'a [f64],
    theta_rad: f64,
}

impl ResolvedStack<'_> {
    fn kz_all(&self, wavelength_nm: f64) -> (Complex64, Vec<Complex64>, Complex64) {
        let n0 = self.n_in.re;
        let kz = |n| longitudinal_wavevector(n, n0, self.theta_rad, wavelength_nm);
        (kz(self.n_in), self.layers.iter().map(|&n| kz(n)).collect(), kz(self.n_out))
    }

    fn scattering_matrix(&self, wavelength_nm: f64) -> Result<ComplexMatrix2> {
        let (kz_in, kz_layers, kz_out) = self.kz_all(wavelength_nm);
        let mut prev = kz_in;
        let mut s = ComplexMatrix2::IDENTITY;
        for (&kz, &d) in kz_layers.iter().zip(self.thicknesses_nm) {
            let (r, t) = fresnel_s(prev, kz)?;
            s = s * interface_matrix(r, t)? * layer_matrix(kz, d);
            prev = kz;
        }
        let (r, t) = fresnel_s(prev, kz_out)?;
        Ok(s * interface_matrix(r, t)?)
    }

    fn response(&self, wavelength_nm: f64) -> Result<Response> {
        let s = self.scattering_matrix(wavelength_nm)?;
        let (r, t) = amplitude_coefficients(&s)?;
        let n0 = self.n_in.re;
        let kz_in = longitudinal_wavevector(self.n_in, n0, self.theta_rad, wavelength_nm);
        let kz_out = longitudinal_wavevector(self.n_out, n0, self.theta_rad, wavelength_nm);
        Ok(Response {
            r,
            t,
            reflectance: r.norm_sqr(),
            transmittance: kz_out.re / kz_in.re * t.norm_sqr(),
        })
    }
}

fn resolve_indices(stack: &LayerStack, wavelength_nm: f64, lib: &MaterialLibrary) -> Result<(Complex64, Vec<Complex64>, Complex64)> {
    stack.validate()?;
    let layers = stack
        .materials
        .iter()
        .map(|m| lib.index_at(m, wavelength_nm))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        lib.index_at(&stack.ambient_in, wavelength_nm)?,
        layers,
        lib.index_at(&stack.ambient_out, wavelength_nm)?,
    ))
}

pub fn scattering_matrix(stack: &LayerStack, wavelength_nm: f64, lib: &MaterialLibrary) -> Result<ComplexMatrix2> {
    let (n_in, layers, n_out) = resolve_indices(stack, wavelength_nm, lib)?;
    ResolvedStack {
        n_in,
        n_out,
        layers: &layers,
        thicknesses_nm: &stack.thicknesses_nm,
        theta_rad: stack.incidence_angle_rad,
    }
    .scattering_matrix(wavelength_nm)
}

pub fn response(stack: &LayerStack, wavelength_nm: f64, lib: &MaterialLibrary) -> Result<Response> {
    let (n_in, layers, n_out) = resolve_indices(stack, wavelength_nm, lib)?;
    ResolvedStack {
        n_in,
        n_out,
        layers: &layers,
        thicknesses_nm: &stack.thicknesses_nm,
        theta_rad: stack.incidence_angle_rad,
    }
    .response(wavelength_nm)
}

/// Power transmittance `Re(k_z,out)/Re(k_z,in) |t|^2`.
pub fn transmittance(stack: &LayerStack, wavelength_nm: f64, lib: &MaterialLibrary) -> Result<f64> {
    Ok(response(stack, wavelength_nm, lib)?.transmittance)
}

pub fn transmission_spectrum(stack: &LayerStack, lib: &MaterialLibrary) -> Result<Spectrum> {
    let values = wavelength_grid()
        .map(|wl| transmittance(stack, wl, lib))
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(values)
}

/// Spectrum evaluator with the dispersion tables pre-sampled on the grid.
///
/// Produces values bit-identical to [`transmission_spectrum`]; it only
/// skips the repeated table lookups, which dominate for short stacks.
#[derive(Debug, Clone)]
pub struct Simulator {
    library: MaterialLibrary,
    sampled: Vec<(MaterialId, Vec<Complex64>)>,
}

impl Simulator {
    pub fn new(library: MaterialLibrary) -> Result<Self> {
        let mut sampled = Vec::new();
        for id in [MaterialId::Air, MaterialId::SiO2, MaterialId::TiO2] {
            if let Ok(table) = library.get(&id) {
                let values = wavelength_grid().map(|wl| table.index_at(wl)).collect::<Result<Vec<_>>>()?;
                sampled.push((id, values));
            }
        }
        Ok(Self { library, sampled })
    }

    pub fn shipped() -> Result<Self> {
        Self::new(MaterialLibrary::shipped()?)
    }

    pub fn library(&self) -> &MaterialLibrary {
        &self.library
    }

    fn sampled(&self, id: &MaterialId) -> Option<&[Complex64]> {
        self.sampled.iter().find(|(m, _)| m == id).map(|(_, v)| v.as_slice())
    }

    pub fn spectrum(&self, stack: &LayerStack) -> Result<Spectrum> {
        stack.validate()?;
        let mut ids = vec![&stack.ambient_in, &stack.ambient_out];
        ids.extend(stack.materials.iter());
        if ids.iter().any(|id| self.sampled(id).is_none()) {
            return transmission_spectrum(stack, &self.library);
        }
        let n_in = self.sampled(&stack.ambient_in).unwrap();
        let n_out = self.sampled(&stack.ambient_out).unwrap();
        let per_layer: Vec<&[Complex64]> = stack.materials.iter().map(|m| self.sampled(m).unwrap()).collect();
        let mut layers = vec![Complex64::new(0.0, 0.0); stack.len()];
        let mut values = Vec::with_capacity(GRID_LEN);
        for (i, wl) in wavelength_grid().enumerate() {
            for (slot, table) in layers.iter_mut().zip(&per_layer) {
                *slot = table[i];
            }
            let resolved = ResolvedStack {
                n_in: n_in[i],
                n_out: n_out[i],
                layers: &layers,
                thicknesses_nm: &stack.thicknesses_nm,
                theta_rad: stack.incidence_angle_rad,
            };
            values.push(resolved.response(wl)?.transmittance);
        }
        Spectrum::new(values)
    }

    /// Spectrum of the default alternating SiO2/TiO2 stack in air.
    pub fn alternating_spectrum(&self, thicknesses_nm: &[f64]) -> Result<Spectrum> {
        self.spectrum(&LayerStack::alternating(thicknesses_nm.to_vec())?)
    }
}
