//! Anisotropic merge kernels.
//!
//! Each frame's half-resolution luma is analysed with a gradient structure
//! tensor. Its eigen-decomposition drives the kernel shape: strong, oriented
//! gradients give kernels that are long along the edge and thin across it,
//! while flat regions get wide isotropic kernels that average noise away.
//! Sample weights are unnormalized anisotropic Gaussians of the sample
//! offset.

use rayon::prelude::*;

use crate::image::Plane;
use crate::noise::TuningParams;
use crate::raw::LumaImage;

/// Floor on kernel variances (px^2) so every covariance stays invertible.
pub const MIN_KERNEL_VARIANCE: f64 = 1e-6;
/// Below this eigenvalue sum the patch is treated as flat (no anisotropy).
pub const FLAT_EIGEN_SUM: f64 = 1e-12;

/// Symmetric 2x2 matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        a: 1.0,
        b: 0.0,
        c: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn diag(a: f64, c: f64) -> Self {
        Self { a, b: 0.0, c }
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    /// Inverse, or `None` when the matrix is singular.
    #[inline]
    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        if det.abs() <= f64::MIN_POSITIVE || !det.is_finite() {
            return None;
        }
        Some(Sym2 {
            a: self.c / det,
            b: -self.b / det,
            c: self.a / det,
        })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.det() > 0.0
    }

    /// Quadratic form `d^T M d`.
    #[inline]
    pub fn quad_form(&self, dx: f64, dy: f64) -> f64 {
        self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy
    }

    #[inline]
    fn lerp(&self, other: &Sym2, t: f64) -> Sym2 {
        Sym2 {
            a: self.a + (other.a - self.a) * t,
            b: self.b + (other.b - self.b) * t,
            c: self.c + (other.c - self.c) * t,
        }
    }
}

/// Structure tensor entries at one pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StructureTensor {
    pub ixx: f64,
    pub ixy: f64,
    pub iyy: f64,
}

impl StructureTensor {
    pub fn as_sym(&self) -> Sym2 {
        Sym2::new(self.ixx, self.ixy, self.iyy)
    }
}

/// Per-pixel structure tensors of a luma image.
#[derive(Clone, Debug)]
pub struct StructureTensorField {
    width: usize,
    height: usize,
    tensors: Vec<StructureTensor>,
}

impl StructureTensorField {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> StructureTensor {
        self.tensors[y * self.width + x]
    }
}

/// Averages gradient outer products over the four 2x2 cells of each pixel's
/// 3x3 window. Each cell contributes one forward-difference gradient pair
/// (differences averaged along the cell's two rows/columns), so horizontal
/// and vertical derivatives are co-located.
pub fn structure_tensor_field(luma: &LumaImage) -> StructureTensorField {
    let p = luma.plane();
    let (w, h) = p.dims();
    let mut tensors = vec![StructureTensor::default(); w * h];
    tensors
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            let y = y as isize;
            for (x, out) in row.iter_mut().enumerate() {
                let x = x as isize;
                let (mut sxx, mut sxy, mut syy) = (0.0f64, 0.0f64, 0.0f64);
                for cy in [-1isize, 0] {
                    for cx in [-1isize, 0] {
                        let i00 = p.get_clamped(x + cx, y + cy) as f64;
                        let i10 = p.get_clamped(x + cx + 1, y + cy) as f64;
                        let i01 = p.get_clamped(x + cx, y + cy + 1) as f64;
                        let i11 = p.get_clamped(x + cx + 1, y + cy + 1) as f64;
                        let gx = 0.5 * ((i10 - i00) + (i11 - i01));
                        let gy = 0.5 * ((i01 - i00) + (i11 - i10));
                        sxx += gx * gx;
                        sxy += gx * gy;
                        syy += gy * gy;
                    }
                }
                *out = StructureTensor {
                    ixx: sxx * 0.25,
                    ixy: sxy * 0.25,
                    iyy: syy * 0.25,
                };
            }
        });
    StructureTensorField {
        width: w,
        height: h,
        tensors,
    }
}

/// Eigen-decomposition of a symmetric PSD 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenPair {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Dominant direction (across edges).
    pub e1: [f64; 2],
    /// Orthogonal direction (along edges).
    pub e2: [f64; 2],
}

/// Closed-form 2x2 symmetric eigen-decomposition with `lambda1 >= lambda2`.
/// Near-equal eigenvalues resolve to `e1 = (1, 0)`.
pub fn eigen2x2(t: &StructureTensor) -> EigenPair {
    let (a, b, c) = (t.ixx, t.ixy, t.iyy);
    let half_tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let lambda1 = (half_tr + disc).max(0.0);
    let lambda2 = (half_tr - disc).max(0.0);
    let e1 = if lambda1 - lambda2 < 1e-12 {
        [1.0, 0.0]
    } else {
        let v = if a >= c {
            [lambda1 - c, b]
        } else {
            [b, lambda1 - a]
        };
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    };
    EigenPair {
        lambda1,
        lambda2,
        e1,
        e2: [-e1[1], e1[0]],
    }
}

/// Kernel shape parameters for one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelShape {
    /// Variance along the edge (px^2).
    pub k1: f64,
    /// Variance across the edge (px^2).
    pub k2: f64,
    /// Anisotropy in [1, 2].
    pub anisotropy: f64,
    /// Denoising blend in [0, 1].
    pub denoise: f64,
}

pub fn kernel_shape_params(lambda1: f64, lambda2: f64, tune: &TuningParams) -> KernelShape {
    let sum = lambda1 + lambda2;
    let anisotropy = if sum < FLAT_EIGEN_SUM {
        1.0
    } else {
        1.0 + ((lambda1 - lambda2) / sum).clamp(0.0, 1.0).sqrt()
    };
    let denoise = (1.0 - lambda1.max(0.0).sqrt() / tune.d_tr + tune.d_th).clamp(0.0, 1.0);
    let k1_hat = tune.k_detail * (tune.k_stretch * anisotropy);
    let k2_hat = tune.k_detail / (tune.k_shrink * anisotropy);
    let flat = denoise * tune.k_detail * tune.k_denoise;
    let k1 = ((1.0 - denoise) * k1_hat + flat).powi(2);
    let k2 = ((1.0 - denoise) * k2_hat + flat).powi(2);
    KernelShape {
        k1,
        k2,
        anisotropy,
        denoise,
    }
}

/// `[u v] diag(k1, k2) [u v]^T` with both variances floored.
pub fn assemble_covariance(u: [f64; 2], v: [f64; 2], k1: f64, k2: f64) -> Sym2 {
    let k1 = k1.max(MIN_KERNEL_VARIANCE);
    let k2 = k2.max(MIN_KERNEL_VARIANCE);
    Sym2 {
        a: k1 * u[0] * u[0] + k2 * v[0] * v[0],
        b: k1 * u[0] * u[1] + k2 * v[0] * v[1],
        c: k1 * u[1] * u[1] + k2 * v[1] * v[1],
    }
}

/// Kernel covariance for a structure tensor: the stretched variance `k1` is
/// laid along the edge tangent `e2`, the shrunk `k2` across it.
pub fn kernel_covariance(eig: &EigenPair, shape: &KernelShape) -> Sym2 {
    assemble_covariance(eig.e2, eig.e1, shape.k1, shape.k2)
}

/// Per-pixel (half-resolution) kernel covariances for one frame.
#[derive(Clone, Debug)]
pub struct KernelField {
    width: usize,
    height: usize,
    omega: Vec<Sym2>,
    anisotropy: Vec<f32>,
    denoise: Vec<f32>,
}

impl KernelField {
    pub fn from_luma(luma: &LumaImage, tune: &TuningParams) -> Self {
        let tensors = structure_tensor_field(luma);
        let (width, height) = tensors.dims();
        let per_pixel: Vec<(Sym2, f32, f32)> = tensors
            .tensors
            .par_iter()
            .map(|t| {
                let eig = eigen2x2(t);
                let shape = kernel_shape_params(eig.lambda1, eig.lambda2, tune);
                (
                    kernel_covariance(&eig, &shape),
                    shape.anisotropy as f32,
                    shape.denoise as f32,
                )
            })
            .collect();
        Self {
            width,
            height,
            omega: per_pixel.iter().map(|p| p.0).collect(),
            anisotropy: per_pixel.iter().map(|p| p.1).collect(),
            denoise: per_pixel.iter().map(|p| p.2).collect(),
        }
    }

    /// Builds a field from explicit covariances (row-major).
    pub fn from_covariances(width: usize, height: usize, omega: Vec<Sym2>) -> Self {
        assert_eq!(omega.len(), width * height);
        Self {
            width,
            height,
            omega,
            anisotropy: vec![1.0; width * height],
            denoise: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, omega: Sym2) -> Self {
        Self::from_covariances(width, height, vec![omega; width * height])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn omega_at_pixel(&self, x: usize, y: usize) -> Sym2 {
        self.omega[y * self.width + x]
    }

    /// Covariance and its inverse at continuous half-resolution coordinates.
    /// Entries are bilinearly interpolated (clamped at the border) and the
    /// interpolated matrix is inverted.
    pub fn covariance_at(&self, x: f64, y: f64) -> (Sym2, Sym2) {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self
            .omega_at_pixel(x0, y0)
            .lerp(&self.omega_at_pixel(x1, y0), fx);
        let bottom = self
            .omega_at_pixel(x0, y1)
            .lerp(&self.omega_at_pixel(x1, y1), fx);
        let omega = top.lerp(&bottom, fy);
        let inv = omega.inverse().unwrap_or(Sym2::diag(
            1.0 / MIN_KERNEL_VARIANCE,
            1.0 / MIN_KERNEL_VARIANCE,
        ));
        (omega, inv)
    }

    /// Anisotropy mapped to [0, 1] (A - 1) for debug output.
    pub fn anisotropy_map(&self) -> Plane {
        Plane::from_vec(
            self.width,
            self.height,
            self.anisotropy.iter().map(|a| a - 1.0).collect(),
        )
        .expect("matching dims")
    }

    pub fn denoise_map(&self) -> Plane {
        Plane::from_vec(self.width, self.height, self.denoise.clone()).expect("matching dims")
    }
}

/// Unnormalized anisotropic Gaussian weight `exp(-0.5 d^T omega_inv d)`.
#[inline]
pub fn sample_weight(dx: f64, dy: f64, omega_inv: &Sym2) -> f64 {
    (-0.5 * omega_inv.quad_form(dx, dy)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn luma_from(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> LumaImage {
        LumaImage(Plane::from_fn(w, h, |x, y| f(x as f64, y as f64) as f32))
    }

    #[test]
    fn tensors_of_ramps() {
        let flat = structure_tensor_field(&luma_from(8, 8, |_, _| 0.3));
        assert_eq!(flat.get(4, 4), StructureTensor::default());

        let ramp = structure_tensor_field(&luma_from(16, 16, |x, _| x * 0.01));
        let t = ramp.get(8, 8);
        assert_abs_diff_eq!(t.ixx, 1e-4, epsilon = 1e-9);
        assert_abs_diff_eq!(t.ixy, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.iyy, 0.0, epsilon = 1e-12);

        // unit slopes: use exact small integers so f32 storage is lossless
        let diag = structure_tensor_field(&luma_from(16, 16, |x, y| x + y));
        let t = diag.get(5, 7);
        assert_eq!((t.ixx, t.ixy, t.iyy), (1.0, 1.0, 1.0));
        let e = eigen2x2(&t);
        assert_abs_diff_eq!(e.lambda1, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.lambda2, 0.0, epsilon = 1e-12);
        let unit = structure_tensor_field(&luma_from(16, 16, |x, _| x)).get(3, 3);
        assert_eq!((unit.ixx, unit.ixy, unit.iyy), (1.0, 0.0, 0.0));
    }

    #[test]
    fn eigen_examples() {
        let e = eigen2x2(&StructureTensor {
            ixx: 4.0,
            ixy: 0.0,
            iyy: 1.0,
        });
        assert_eq!((e.lambda1, e.lambda2), (4.0, 1.0));
        assert_eq!(e.e1, [1.0, 0.0]);

        let e = eigen2x2(&StructureTensor {
            ixx: 1.0,
            ixy: 1.0,
            iyy: 1.0,
        });
        assert_abs_diff_eq!(e.lambda1, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.lambda2, 0.0, epsilon = 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(e.e1[0], s, epsilon = 1e-12);
        assert_abs_diff_eq!(e.e1[1], s, epsilon = 1e-12);

        let e = eigen2x2(&StructureTensor::default());
        assert_eq!((e.lambda1, e.lambda2, e.e1), (0.0, 0.0, [1.0, 0.0]));
    }

    #[test]
    fn shape_examples() {
        let tune = crate::noise::tuning_for_snr(30.0);
        let s = kernel_shape_params(0.0, 0.0, &tune);
        assert_eq!(s.anisotropy, 1.0);
        assert_eq!(s.denoise, 1.0);
        assert_abs_diff_eq!(s.k1, 0.5625, epsilon = 1e-12);
        assert_abs_diff_eq!(s.k2, 0.5625, epsilon = 1e-12);

        let s = kernel_shape_params(1.0, 1.0, &tune);
        assert_eq!(s.denoise, 0.0);
        assert_abs_diff_eq!(s.k1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.k2, 0.015625, epsilon = 1e-12);

        let s = kernel_shape_params(5.0, 0.0, &tune);
        assert_abs_diff_eq!(s.anisotropy, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let iso = assemble_covariance([0.6, 0.8], [-0.8, 0.6], 0.7, 0.7);
        assert_abs_diff_eq!(iso.a, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(iso.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iso.c, 0.7, epsilon = 1e-12);
        assert_eq!(
            assemble_covariance([1.0, 0.0], [0.0, 1.0], 1.0, 0.25),
            Sym2::diag(1.0, 0.25)
        );
    }

    #[test]
    fn grid_point_query_has_no_blur() {
        let omegas: Vec<Sym2> = (0..12)
            .map(|i| Sym2::new(1.0 + i as f64, 0.1 * i as f64, 2.0))
            .collect();
        let field = KernelField::from_covariances(4, 3, omegas.clone());
        let (o, inv) = field.covariance_at(2.0, 1.0);
        assert_eq!(o, omegas[6]);
        let id = Sym2::new(
            o.a * inv.a + o.b * inv.b,
            o.a * inv.b + o.b * inv.c,
            o.b * inv.b + o.c * inv.c,
        );
        assert_abs_diff_eq!(id.a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.c, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(sample_weight(0.0, 0.0, &Sym2::IDENTITY), 1.0);
        assert_abs_diff_eq!(
            sample_weight(1.0, 0.0, &Sym2::IDENTITY),
            0.60653,
            epsilon = 1e-5
        );
        let inv = Sym2::diag(4.0, 1.0).inverse().unwrap();
        assert_abs_diff_eq!(sample_weight(2.0, 0.0, &inv), 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn rotation_by_90_rotates_e1() {
        // an edge pattern and its 90-degree rotation
        let f = |x: f64, y: f64| (0.3 * x + 0.1 * y).tanh() * 0.5 + 0.5;
        let n = 21;
        let a = luma_from(n, n, f);
        // rotated(x, y) = original(y, n-1-x)
        let b = luma_from(n, n, |x, y| f(y, (n - 1) as f64 - x));
        let tune = TuningParams::default();
        let ta = structure_tensor_field(&a).get(10, 10);
        let tb = structure_tensor_field(&b).get(10, 10);
        let (ea, eb) = (eigen2x2(&ta), eigen2x2(&tb));
        assert_abs_diff_eq!(ea.lambda1, eb.lambda1, epsilon = 1e-6);
        assert_abs_diff_eq!(ea.lambda2, eb.lambda2, epsilon = 1e-6);
        // e1 of the rotated pattern is e1 rotated by 90 degrees (up to sign)
        let rotated = [ea.e1[1], -ea.e1[0]];
        let dot = rotated[0] * eb.e1[0] + rotated[1] * eb.e1[1];
        assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-4);
        let (sa, sb) = (
            kernel_shape_params(ea.lambda1, ea.lambda2, &tune),
            kernel_shape_params(eb.lambda1, eb.lambda2, &tune),
        );
        assert_abs_diff_eq!(sa.k1, sb.k1, epsilon = 1e-6);
        assert_abs_diff_eq!(sa.k2, sb.k2, epsilon = 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tensor() -> impl Strategy<Value = StructureTensor> {
            (0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0).prop_map(|(p, q, r)| {
                // Gram matrix of two vectors is PSD by construction
                let (u, v) = ([p, r * q], [r * p, q]);
                StructureTensor {
                    ixx: u[0] * u[0] + v[0] * v[0],
                    ixy: u[0] * u[1] + v[0] * v[1],
                    iyy: u[1] * u[1] + v[1] * v[1],
                }
            })
        }

        proptest! {
            #[test]
            fn eigenpairs_reconstruct(t in tensor()) {
                let e = eigen2x2(&t);
                prop_assert!(e.lambda1 >= e.lambda2 && e.lambda2 >= 0.0);
                let n1 = e.e1[0].hypot(e.e1[1]);
                prop_assert!((n1 - 1.0).abs() < 1e-9);
                prop_assert!((e.e1[0] * e.e2[0] + e.e1[1] * e.e2[1]).abs() < 1e-9);
                let r = assemble_covariance(e.e1, e.e2, e.lambda1, e.lambda2);
                if e.lambda2 > 1e-6 {
                    prop_assert!((r.a - t.ixx).abs() < 1e-6);
                    prop_assert!((r.b - t.ixy).abs() < 1e-6);
                    prop_assert!((r.c - t.iyy).abs() < 1e-6);
                }
            }

            #[test]
            fn covariance_is_symmetric_spd(t in tensor(), snr in 1.0f64..60.0) {
                let tune = crate::noise::tuning_for_snr(snr);
                let e = eigen2x2(&t);
                let s = kernel_shape_params(e.lambda1, e.lambda2, &tune);
                prop_assert!(s.k1 > 0.0 && s.k2 > 0.0);
                prop_assert!((1.0..=2.0).contains(&s.anisotropy));
                prop_assert!((0.0..=1.0).contains(&s.denoise));
                let o = kernel_covariance(&e, &s);
                prop_assert!(o.is_positive_definite());
                if s.denoise == 0.0 {
                    let ratio = s.k1 / s.k2;
                    let expected = (tune.k_stretch * tune.k_shrink * s.anisotropy.powi(2)).powi(2);
                    prop_assert!((ratio / expected - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn weight_decays_along_rays(theta in 0.0f64..std::f64::consts::TAU, t in tensor(), r1 in 0.0f64..3.0, dr in 0.001f64..3.0) {
                let tune = TuningParams::default();
                let e = eigen2x2(&t);
                let s = kernel_shape_params(e.lambda1, e.lambda2, &tune);
                let inv = kernel_covariance(&e, &s).inverse().unwrap();
                let (c, sn) = (theta.cos(), theta.sin());
                let w1 = sample_weight(r1 * c, r1 * sn, &inv);
                let w2 = sample_weight((r1 + dr) * c, (r1 + dr) * sn, &inv);
                prop_assert!(w2 <= w1);
                prop_assert!((0.0..=1.0).contains(&w1));
            }
        }
    }
}
