//! The field map produced by one resonant atom transit.
//!
//! Two routes are provided. [`apply_injection_traced`] conjugates the joint
//! atom-field state by the interaction unitary and traces the atom out.
//! [`apply_injection_direct`] expands that trace into eight operator terms and
//! never forms the joint state; it is the production path. Both use the same
//! analytic number-functions, so on the truncated space they agree to
//! rounding and share the same loss through the top Fock level.
//!
//! Basis of the joint space: `{|e> (x) |0..N>, |g> (x) |0..N>}`.

use std::sync::OnceLock;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fock::{
    real_diagonal, sandwich, sinc_branch, validate_density, CMatrix, DensityMatrix,
    Shift, TruncationPolicy, C64, I, ONE, ZERO,
};
use crate::reservoir::AtomState;

/// Resonant interaction unitary on the joint atom-field space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOperator(CMatrix);

impl JointOperator {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn field_dim(&self) -> usize {
        self.0.nrows() / 2
    }
}

/// Diagonal number-functions entering one transit:
/// `c1 = cos(gt sqrt(a a^dag))`, `c2 = cos(gt sqrt(a^dag a))`,
/// `s = sin(gt sqrt(a a^dag)) / sqrt(a a^dag)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionKernel {
    gtau: f64,
    c1: DVector<f64>,
    c2: DVector<f64>,
    s: DVector<f64>,
}

impl InjectionKernel {
    pub fn new(gtau: f64, policy: &TruncationPolicy) -> Result<Self> {
        if !(gtau >= 0.0 && gtau.is_finite()) {
            return Err(Error::InvalidParameter(format!("g tau = {gtau}")));
        }
        let dim = policy.dim();
        Ok(Self {
            gtau,
            c1: real_diagonal(|x| (gtau * x).cos(), Shift::NumberPlusOne, dim),
            c2: real_diagonal(|x| (gtau * x).cos(), Shift::Number, dim),
            s: real_diagonal(sinc_branch(gtau), Shift::NumberPlusOne, dim),
        })
    }

    pub fn gtau(&self) -> f64 {
        self.gtau
    }

    pub fn dim(&self) -> usize {
        self.c1.len()
    }

    pub fn c1(&self) -> CMatrix {
        diag(&self.c1)
    }

    pub fn c2(&self) -> CMatrix {
        diag(&self.c2)
    }

    pub fn s(&self) -> CMatrix {
        diag(&self.s)
    }

    /// `s a`: lowers `|n+1>` to `|n>` with amplitude `sin(gt sqrt(n+1))`.
    pub fn lowering(&self) -> CMatrix {
        let dim = self.dim();
        let mut k = CMatrix::zeros(dim, dim);
        for n in 0..dim - 1 {
            k[(n, n + 1)] = C64::from(self.s[n] * ((n + 1) as f64).sqrt());
        }
        k
    }
}

fn diag(v: &DVector<f64>) -> CMatrix {
    CMatrix::from_diagonal(&v.map(C64::from))
}

/// `U = [[c1, -i s a], [-i a^dag s, c2]]`.
pub fn build_joint_unitary(gtau: f64, policy: &TruncationPolicy) -> Result<JointOperator> {
    let kernel = InjectionKernel::new(gtau, policy)?;
    Ok(joint_unitary(&kernel))
}

fn joint_unitary(kernel: &InjectionKernel) -> JointOperator {
    let dim = kernel.dim();
    let k = kernel.lowering();
    let mut u = CMatrix::zeros(2 * dim, 2 * dim);
    u.view_mut((0, 0), (dim, dim)).copy_from(&kernel.c1());
    u.view_mut((0, dim), (dim, dim)).copy_from(&(&k * (-I)));
    u.view_mut((dim, 0), (dim, dim)).copy_from(&(k.adjoint() * (-I)));
    u.view_mut((dim, dim), (dim, dim)).copy_from(&kernel.c2());
    JointOperator(u)
}

/// Joint state `rho_atom (x) rho_field` in the `{e, g} x Fock` ordering.
pub fn joint_state(field: &CMatrix, atom: &AtomState) -> CMatrix {
    atom.matrix().kronecker(field)
}

/// Field marginal of a joint state: sum of the `ee` and `gg` blocks.
pub fn trace_out_atom(joint: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = joint.shape();
    if rows != cols || rows % 2 != 0 {
        return Err(Error::ShapeMismatch { expected: "even square matrix".into(), got: format!("{rows}x{cols}") });
    }
    let dim = rows / 2;
    Ok(joint.view((0, 0), (dim, dim)) + joint.view((dim, dim), (dim, dim)))
}

/// The map of one atom transit, with its superoperator built on first use.
#[derive(Debug)]
pub struct InjectionMap {
    kernel: InjectionKernel,
    atom: AtomState,
    policy: TruncationPolicy,
    lowering: CMatrix,
    raising: CMatrix,
    c1: CMatrix,
    c2: CMatrix,
    superop: OnceLock<CMatrix>,
}

impl InjectionMap {
    pub fn new(atom: AtomState, gtau: f64, policy: &TruncationPolicy) -> Result<Self> {
        let kernel = InjectionKernel::new(gtau, policy)?;
        let lowering = kernel.lowering();
        Ok(Self {
            raising: lowering.adjoint(),
            c1: kernel.c1(),
            c2: kernel.c2(),
            lowering,
            kernel,
            atom,
            policy: *policy,
            superop: OnceLock::new(),
        })
    }

    pub fn atom(&self) -> &AtomState {
        &self.atom
    }

    pub fn kernel(&self) -> &InjectionKernel {
        &self.kernel
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    /// The eight `(coefficient, left, right)` terms of the transit map, in
    /// the operator order `coefficient * left * rho * right`.
    pub(crate) fn terms(&self) -> [(C64, &CMatrix, &CMatrix); 8] {
        let (p_e, p_g) = (C64::from(self.atom.p_e()), C64::from(self.atom.p_g()));
        let lam = self.atom.lambda();
        let (k, kd, c1, c2) = (&self.lowering, &self.raising, &self.c1, &self.c2);
        [
            (p_e, c1, c1),
            (p_e, kd, k),
            (p_g, k, kd),
            (p_g, c2, c2),
            (I * lam, c1, kd),
            (-I * lam, kd, c2),
            (I * lam.conj(), c2, k),
            (-I * lam.conj(), k, c1),
        ]
    }

    /// Eight-term action on an arbitrary matrix.
    pub fn act(&self, rho: &CMatrix) -> CMatrix {
        let dim = self.kernel.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (coef, left, right) in self.terms() {
            if coef == ZERO {
                continue;
            }
            out += (left * rho * right) * coef;
        }
        out
    }

    /// Reference action through the joint unitary.
    pub fn act_traced(&self, rho: &CMatrix) -> CMatrix {
        let u = joint_unitary(&self.kernel);
        let joint = u.matrix() * joint_state(rho, &self.atom) * u.matrix().adjoint();
        trace_out_atom(&joint).expect("joint state is square with even size")
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        validate_density(self.act(rho.matrix()), &self.policy)
    }

    /// `dim^2 x dim^2` matrix of the map acting on column-stacked states.
    pub fn superop(&self) -> &CMatrix {
        self.superop.get_or_init(|| {
            let n = self.kernel.dim() * self.kernel.dim();
            let mut m = CMatrix::zeros(n, n);
            for (coef, left, right) in self.terms() {
                if coef != ZERO {
                    m += sandwich(left, right) * coef;
                }
            }
            m
        })
    }
}

pub fn apply_injection_traced(
    rho: &DensityMatrix,
    atom: &AtomState,
    gtau: f64,
    policy: &TruncationPolicy,
) -> Result<DensityMatrix> {
    let map = InjectionMap::new(*atom, gtau, policy)?;
    validate_density(map.act_traced(rho.matrix()), policy)
}

pub fn apply_injection_direct(
    rho: &DensityMatrix,
    atom: &AtomState,
    gtau: f64,
    policy: &TruncationPolicy,
) -> Result<DensityMatrix> {
    InjectionMap::new(*atom, gtau, policy)?.apply(rho)
}

pub fn injection_superop_matrix(atom: &AtomState, gtau: f64, policy: &TruncationPolicy) -> Result<CMatrix> {
    Ok(InjectionMap::new(*atom, gtau, policy)?.superop().clone())
}

/// Choi matrix `sum_ij |i><j| (x) M(|i><j|)` of a field map.
pub fn choi_matrix(map: impl Fn(&CMatrix) -> CMatrix, dim: usize) -> CMatrix {
    let mut choi = CMatrix::zeros(dim * dim, dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut e = CMatrix::zeros(dim, dim);
            e[(i, j)] = ONE;
            let image = map(&e);
            choi.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&image);
        }
    }
    choi
}

/// `Tr(n M(rho)) - Tr(n rho)` predicted for an incoherent atom:
/// `p_e Tr(sin^2(gt sqrt(a a^dag)) rho) - p_g Tr(sin^2(gt sqrt(a^dag a)) rho)`.
pub fn excitation_gain(rho: &CMatrix, atom: &AtomState, gtau: f64) -> f64 {
    (0..rho.nrows())
        .map(|n| {
            let up = (gtau * ((n + 1) as f64).sqrt()).sin().powi(2);
            let down = (gtau * (n as f64).sqrt()).sin().powi(2);
            (atom.p_e() * up - atom.p_g() * down) * rho[(n, n)].re
        })
        .sum()
}
