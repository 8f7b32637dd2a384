//! Counting-field tilted generator of the populations (ρ_I, ρ_II, ρ_III,
//! ρ_IV) = ({1,8}, {2,7}, {3,6}, {4,5}).
//!
//! Every off-diagonal entry (to, from) is a sum of rates, each multiplied by
//! e^{i Σ_α ε_α χ_α}, where ε_α is the energy the system absorbs from bath α
//! in that jump. With real tilts u_α = iχ_α the factor becomes e^{Σ ε_α u_α}.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{zeros, Jet, Mat4, Scalar, C64};
use crate::model::{Bath, SystemParams};
use crate::modulation::HarmonicSpectrum;

pub const I: usize = 0;
pub const II: usize = 1;
pub const III: usize = 2;
pub const IV: usize = 3;

/// Level energies E_I = Δ, E_II = E_IV = 0, E_III = −Δ, in units of Δ.
pub const LEVEL_ENERGY: [f64; 4] = [1.0, 0.0, -1.0, 0.0];

/// Counting fields (χ_E, χ_B, χ_C). Under `real_tilt` the triple holds
/// u_α = iχ_α instead.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountingField {
    pub chi: [f64; 3],
    pub real_tilt: bool,
}

impl CountingField {
    pub fn zero() -> Self {
        CountingField::default()
    }

    pub fn complex(chi_e: f64, chi_b: f64, chi_c: f64) -> Self {
        CountingField {
            chi: [chi_e, chi_b, chi_c],
            real_tilt: false,
        }
    }

    pub fn real(u_e: f64, u_b: f64, u_c: f64) -> Self {
        CountingField {
            chi: [u_e, u_b, u_c],
            real_tilt: true,
        }
    }

    /// Real tilt u on a single bath.
    pub fn real_single(bath: Bath, u: f64) -> Self {
        let mut chi = [0.0; 3];
        chi[bath.index()] = u;
        CountingField { chi, real_tilt: true }
    }

    pub fn is_zero(&self) -> bool {
        self.chi.iter().all(|c| *c == 0.0)
    }
}

/// One jump `from → to` at `rate`, absorbing `energy[α]` from bath α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub to: usize,
    pub from: usize,
    pub rate: f64,
    pub energy: [f64; 3],
}

/// Untilted jump rates plus the diagonal, from which tilted matrices over
/// any scalar type are assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    pub transitions: Vec<Transition>,
    pub diagonal: [f64; 4],
}

impl RateModel {
    fn new() -> Self {
        RateModel {
            transitions: Vec::new(),
            diagonal: [0.0; 4],
        }
    }

    fn push(&mut self, to: usize, from: usize, rate: f64, bath: Option<Bath>, energy: f64) {
        if rate == 0.0 {
            return;
        }
        let mut e = [0.0; 3];
        if let Some(b) = bath {
            e[b.index()] = energy;
        }
        self.transitions.push(Transition { to, from, rate, energy: e });
    }

    /// Sets each diagonal entry to minus its column's outflow.
    fn conserve(&mut self) {
        let mut d = [0.0; 4];
        for t in &self.transitions {
            d[t.from] -= t.rate;
        }
        self.diagonal = d;
    }

    fn assemble<T: Scalar>(&self, factor: impl Fn(&Transition) -> T) -> Mat4<T> {
        let mut m = zeros::<T, 4>();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::from_f64(self.diagonal[i]);
        }
        for t in &self.transitions {
            m[t.to][t.from] = m[t.to][t.from] + factor(t).scale(t.rate);
        }
        m
    }

    /// The generator at χ = 0.
    pub fn matrix(&self) -> Mat4<f64> {
        self.assemble(|_| 1.0)
    }

    /// Real-tilt generator L(u).
    pub fn tilted_real(&self, u: [f64; 3]) -> Mat4<f64> {
        self.assemble(|t| libm::exp(t.energy[0] * u[0] + t.energy[1] * u[1] + t.energy[2] * u[2]))
    }

    /// Complex counting-field generator L(χ).
    pub fn tilted_complex(&self, chi: [f64; 3]) -> Mat4<C64> {
        self.assemble(|t| {
            let ph = t.energy[0] * chi[0] + t.energy[1] * chi[1] + t.energy[2] * chi[2];
            C64::new(libm::cos(ph), libm::sin(ph))
        })
    }

    pub fn tilted(&self, field: &CountingField) -> Mat4<C64> {
        if field.real_tilt {
            let r = self.tilted_real(field.chi);
            let mut m = zeros::<C64, 4>();
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = C64::new(r[i][j], 0.0);
                }
            }
            m
        } else {
            self.tilted_complex(field.chi)
        }
    }

    /// Generator with entries carried as second-order jets in the real tilt
    /// of `bath`, expanded around u = `u0`.
    pub fn tilted_jet(&self, bath: Bath, u0: f64) -> Mat4<Jet> {
        let k = bath.index();
        self.assemble(|t| (Jet::variable(u0).scale(t.energy[k])).exp())
    }

    /// Largest |column sum| at χ = 0.
    pub fn column_sum_defect(&self) -> f64 {
        let m = self.matrix();
        (0..4)
            .map(|j| (0..4).map(|i| m[i][j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Which form of the low-temperature matrix to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LowTVariant {
    /// (IV,IV) = −Δ − ℬ − ΔM, so every column sums to zero.
    #[default]
    Conserving,
    /// (IV,IV) = −Δ − ℱ − ΔM exactly as printed in the source matrix; leaks
    /// probability at rate P₀T_B from IV.
    AsPrinted,
}

/// Which generator the numeric pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Builder {
    /// Occupancy-based rates with all sidebands.
    Full { exact_phases: bool },
    /// Low-temperature matrix (needs |q| ≤ 1).
    LowT(LowTVariant),
}

impl Default for Builder {
    fn default() -> Self {
        Builder::Full { exact_phases: false }
    }
}

/// ℱ, ℬ, R(ν), R(0) and 𝒬 of the low-temperature matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuxRates {
    pub f_rate: f64,
    pub b_rate: f64,
    /// R(ν); may be +∞ when ν/T_B is huge, use `r_nu_h2` for rates.
    pub r_of_nu: f64,
    pub r_of_0: f64,
    pub q_diag: f64,
    /// R(ν)·e^{−2Δ/T_B}, evaluated without overflow.
    pub r_nu_h2: f64,
}

fn check_low_support(spectrum: &HarmonicSpectrum) -> Result<()> {
    if spectrum.max_harmonic() > 1 {
        return Err(Error::UnsupportedProtocol(format!(
            "harmonic |q| = {} present; the low-temperature form keeps q in {{-1, 0, 1}}, use the full builder",
            spectrum.max_harmonic()
        )));
    }
    Ok(())
}

pub fn aux_rates(params: &SystemParams, spectrum: &HarmonicSpectrum) -> Result<AuxRates> {
    params.validate()?;
    check_low_support(spectrum)?;
    let d = params.delta;
    let nu = spectrum.nu;
    let p0 = spectrum.weight(0);
    let p1 = spectrum.symmetric_weight(1);
    let r0 = p0 + 2.0 * p1;

    if params.zero_tb {
        let f = nu * p1;
        let r_nu_h2 = if nu >= 2.0 * d {
            f64::INFINITY
        } else {
            0.0
        };
        return Ok(AuxRates {
            f_rate: f,
            b_rate: f,
            r_of_nu: f64::INFINITY,
            r_of_0: r0,
            q_diag: -2.0 * d * (1.0 + r0),
            r_nu_h2,
        });
    }

    let tb = params.t_b;
    let f = if nu == 0.0 {
        2.0 * tb * p1
    } else {
        let x = nu / (2.0 * tb);
        nu * p1 / libm::tanh(x)
    };
    let b = p0 * tb + f;
    let r_nu = p0 + p1 * (nu / (2.0 * d) + 1.0) * libm::exp(-nu / tb) + p1 * (1.0 - nu / (2.0 * d)) * libm::exp(nu / tb);
    let r_nu_h2 = p0 * libm::exp(-2.0 * d / tb)
        + p1 * (nu / (2.0 * d) + 1.0) * libm::exp(-(2.0 * d + nu) / tb)
        + p1 * (1.0 - nu / (2.0 * d)) * libm::exp(-(2.0 * d - nu) / tb);
    Ok(AuxRates {
        f_rate: f,
        b_rate: b,
        r_of_nu: r_nu,
        r_of_0: r0,
        q_diag: -2.0 * d * (1.0 + r0),
        r_nu_h2,
    })
}

/// Jump rates of the low-temperature matrix, scaled by κ.
pub fn low_t_rate_model(params: &SystemParams, spectrum: &HarmonicSpectrum, variant: LowTVariant) -> Result<RateModel> {
    let aux = aux_rates(params, spectrum)?;
    let d = params.delta;
    let k = params.kappa;
    let m = libm::exp(-d / params.t_e);
    let g = libm::exp(-d / params.t_c);
    let (e, b, c) = (Some(Bath::Emitter), Some(Bath::Base), Some(Bath::Collector));

    let mut rm = RateModel::new();
    rm.push(II, I, k * d, c, -d);
    rm.push(I, II, k * d * g, c, d);
    rm.push(IV, I, k * d, e, -d);
    rm.push(I, IV, k * d * m, e, d);
    rm.push(III, II, k * d, e, -d);
    rm.push(II, III, k * d * m, e, d);
    rm.push(III, IV, k * d, c, -d);
    rm.push(IV, III, k * d * g, c, d);
    rm.push(III, I, k * 2.0 * d * aux.r_of_0, b, -2.0 * d);
    rm.push(I, III, k * 2.0 * d * aux.r_nu_h2, b, 2.0 * d);
    rm.push(II, IV, k * aux.b_rate, None, 0.0);
    rm.push(IV, II, k * aux.b_rate, None, 0.0);
    rm.conserve();
    if variant == LowTVariant::AsPrinted {
        rm.diagonal[IV] = -k * (d + aux.f_rate + d * m);
    }
    if !rm.diagonal.iter().all(|x| x.is_finite()) || rm.transitions.iter().any(|t| !t.rate.is_finite()) {
        return Err(Error::Numerical("non-finite low-temperature rate".into()));
    }
    Ok(rm)
}

/// Occupancy-based jump rates with every sideband of the (symmetrized)
/// spectrum, scaled by κ.
pub fn full_rate_model(params: &SystemParams, spectrum: &HarmonicSpectrum, exact_phases: bool) -> Result<RateModel> {
    params.validate()?;
    let d = params.delta;
    let nu = spectrum.nu;
    let qmax = spectrum.max_harmonic();
    let sym: Vec<(i32, f64)> = (-qmax..=qmax)
        .map(|q| (q, spectrum.symmetric_weight(q)))
        .filter(|(_, p)| *p > 0.0)
        .collect();
    for (q, _) in &sym {
        if 2.0 * d + *q as f64 * nu <= 0.0 {
            return Err(Error::domain(format!(
                "sideband 2Δ + qν = {} is not positive at q = {q}",
                2.0 * d + *q as f64 * nu
            )));
        }
    }
    let (e, b, c) = (Bath::Emitter, Bath::Base, Bath::Collector);
    let ge_em = params.bath_rate(e, d)?;
    let ge_ab = params.bath_rate(e, -d)?;
    let gc_em = params.bath_rate(c, d)?;
    let gc_ab = params.bath_rate(c, -d)?;

    let mut rm = RateModel::new();
    rm.push(II, I, gc_em, Some(c), -d);
    rm.push(I, II, gc_ab, Some(c), d);
    rm.push(IV, I, ge_em, Some(e), -d);
    rm.push(I, IV, ge_ab, Some(e), d);
    rm.push(III, II, ge_em, Some(e), -d);
    rm.push(II, III, ge_ab, Some(e), d);
    rm.push(III, IV, gc_em, Some(c), -d);
    rm.push(IV, III, gc_ab, Some(c), d);

    let mut down = 0.0;
    let mut up = 0.0;
    let mut side = 0.0;
    for (q, p) in &sym {
        let w = 2.0 * d + *q as f64 * nu;
        let r_down = p * params.bath_rate(b, w)?;
        let r_up = p * params.bath_rate(b, -w)?;
        let r_side = p * params.bath_rate(b, *q as f64 * nu)?;
        if exact_phases {
            rm.push(III, I, r_down, Some(b), -w);
            rm.push(I, III, r_up, Some(b), w);
            rm.push(IV, II, r_side, Some(b), -(*q as f64) * nu);
            rm.push(II, IV, r_side, Some(b), -(*q as f64) * nu);
        } else {
            down += r_down;
            up += r_up;
            side += r_side;
        }
    }
    if !exact_phases {
        rm.push(III, I, down, Some(b), -2.0 * d);
        rm.push(I, III, up, Some(b), 2.0 * d);
        rm.push(IV, II, side, None, 0.0);
        rm.push(II, IV, side, None, 0.0);
    }
    rm.conserve();
    if rm.transitions.iter().any(|t| !t.rate.is_finite()) {
        return Err(Error::Numerical("non-finite full rate".into()));
    }
    Ok(rm)
}

pub fn rate_model(params: &SystemParams, spectrum: &HarmonicSpectrum, builder: Builder) -> Result<RateModel> {
    match builder {
        Builder::Full { exact_phases } => full_rate_model(params, spectrum, exact_phases),
        Builder::LowT(v) => low_t_rate_model(params, spectrum, v),
    }
}

/// A tilted generator together with the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedGenerator {
    pub matrix: Mat4<C64>,
    pub params: SystemParams,
    pub spectrum: HarmonicSpectrum,
    pub chi: CountingField,
}

impl TiltedGenerator {
    /// Real part of the matrix (exact under a real tilt or at χ = 0).
    pub fn real_matrix(&self) -> Mat4<f64> {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = self.matrix[i][j].re;
            }
        }
        m
    }
}

pub fn build_full(params: &SystemParams, spectrum: &HarmonicSpectrum, chi: CountingField) -> Result<TiltedGenerator> {
    let rm = full_rate_model(params, spectrum, false)?;
    Ok(TiltedGenerator {
        matrix: rm.tilted(&chi),
        params: *params,
        spectrum: spectrum.clone(),
        chi,
    })
}

pub fn build_low_t(params: &SystemParams, spectrum: &HarmonicSpectrum, chi: CountingField) -> Result<TiltedGenerator> {
    build_low_t_variant(params, spectrum, chi, LowTVariant::Conserving)
}

pub fn build_low_t_variant(
    params: &SystemParams,
    spectrum: &HarmonicSpectrum,
    chi: CountingField,
    variant: LowTVariant,
) -> Result<TiltedGenerator> {
    let rm = low_t_rate_model(params, spectrum, variant)?;
    Ok(TiltedGenerator {
        matrix: rm.tilted(&chi),
        params: *params,
        spectrum: spectrum.clone(),
        chi,
    })
}
