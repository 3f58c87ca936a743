//! Real spherical harmonics basis, degrees 0..3, for view-direction encoding.
//!
//! Ordering per degree: m = -l..l, the common 3DGS / instant-NGP layout.

use nalgebra::Vector3;

pub const SH_DIM: usize = 16;

const C0: f64 = 0.28209479177387814;
const C1: f64 = 0.4886025119029199;
const C2_0: f64 = 1.0925484305920792;
const C2_1: f64 = 0.31539156525252005;
const C2_2: f64 = 0.5462742152960396;
const C3_0: f64 = 0.5900435899266435;
const C3_1: f64 = 2.890611442640554;
const C3_2: f64 = 0.4570457994644658;
const C3_3: f64 = 0.3731763325901154;
const C3_4: f64 = 1.445305721320277;

/// Basis values for a unit direction.
pub fn sh_encode(d: &Vector3<f64>) -> [f64; SH_DIM] {
    debug_assert!((d.norm() - 1.0).abs() < 1e-6, "direction must be unit");
    let (x, y, z) = (d.x, d.y, d.z);
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    [
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2_0 * xy,
        C2_0 * yz,
        C2_1 * (3.0 * z2 - 1.0),
        C2_0 * xz,
        C2_2 * (x2 - y2),
        C3_0 * y * (3.0 * x2 - y2),
        C3_1 * xy * z,
        C3_2 * y * (5.0 * z2 - 1.0),
        C3_3 * z * (5.0 * z2 - 3.0),
        C3_2 * x * (5.0 * z2 - 1.0),
        C3_4 * z * (x2 - y2),
        C3_0 * x * (x2 - 3.0 * y2),
    ]
}
