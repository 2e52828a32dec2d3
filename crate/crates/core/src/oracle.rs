//! Brute-force reference implementations used as testing oracles.
//!
//! These deliberately avoid the fast paths: the group convolution here is
//! the literal double sum over the group with spatially materialized
//! kernels, evaluated with modular index arithmetic. The frequency-domain
//! implementation in `operator` must reproduce it exactly (to roundoff)
//! whenever the kernel band covers the whole grid.

use crate::error::{Error, Result};
use crate::group::{modular_source, stab_compose, stab_inverse, Group, Stab};
use crate::spectral::wrap;
use crate::tensor::{Dtype, Tensor};

/// Spatial group correlation of a feature stack f (d_in, d_g, n, n) with
/// materialized kernels psi (d_out, d_in, d_g, n, n):
///
///   out[l, t](y) = sum_{s, j, x} f[j, s](x) * psi[l, j, s t^-1]( t.(x - y) )
///
/// where t.(v) is the modular point map of the stabilizer t and the
/// kernel slice index is compose(s, inverse(t)).
pub fn gconv_spatial(f: &Tensor, psi: &Tensor, group: Group) -> Result<Tensor> {
    let fs = f.shape();
    let ps = psi.shape();
    if fs.len() != 4 || ps.len() != 5 {
        return Err(Error::invalid(format!(
            "gconv_spatial expects f (d_in, d_g, n, n) and psi (d_out, d_in, d_g, n, n), got {fs:?} / {ps:?}"
        )));
    }
    let d_g = group.d_g();
    let (d_in, n) = (fs[0], fs[2]);
    let d_out = ps[0];
    if fs[1] != d_g || ps[2] != d_g || ps[1] != d_in || fs[3] != n || ps[3] != n || ps[4] != n {
        return Err(Error::invalid(format!(
            "inconsistent shapes for group {}: f {fs:?}, psi {ps:?}",
            group.name()
        )));
    }
    if !f.is_real() || !psi.is_real() {
        return Err(Error::DtypeMismatch {
            op: "gconv_spatial",
            expected: "real64",
            got: "complex128",
        });
    }

    let mut out = Tensor::zeros(Dtype::Real, &[d_out, d_g, n, n]);
    for ti in 0..d_g {
        let t = Stab::from_index(group, ti);
        let t_inv = stab_inverse(&t);
        // Forward point map of t is the source map of its inverse.
        let point_of = |v: (i64, i64)| modular_source(&t_inv, v, n);
        for si in 0..d_g {
            let s = Stab::from_index(group, si);
            let m = stab_compose(&s, &t_inv)?.index();
            for y0 in 0..n {
                for y1 in 0..n {
                    for x0 in 0..n {
                        for x1 in 0..n {
                            let v = (x0 as i64 - y0 as i64, x1 as i64 - y1 as i64);
                            let (k0, k1) = point_of(v);
                            for l in 0..d_out {
                                let mut acc = out.real_at(((l * d_g + ti) * n + y0) * n + y1);
                                for j in 0..d_in {
                                    let fv = f.real_at(((j * d_g + si) * n + x0) * n + x1);
                                    let kv = psi.real_at(
                                        (((l * d_in + j) * d_g + m) * n + k0) * n + k1,
                                    );
                                    acc += fv * kv;
                                }
                                out.set_real(((l * d_g + ti) * n + y0) * n + y1, acc);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Plane correlation for the trivial group (ordinary translation-only
/// convolution oracle): out[l](y) = sum_{j, x} f[j](x) psi[l, j](x - y).
pub fn conv_plane_spatial(f: &Tensor, psi: &Tensor) -> Result<Tensor> {
    let fs = f.shape();
    let ps = psi.shape();
    if fs.len() != 3 || ps.len() != 4 {
        return Err(Error::invalid(
            "conv_plane_spatial expects f (d_in, n, n), psi (d_out, d_in, n, n)".to_string(),
        ));
    }
    let (d_in, n) = (fs[0], fs[1]);
    let d_out = ps[0];
    let mut out = Tensor::zeros(Dtype::Real, &[d_out, n, n]);
    for y0 in 0..n {
        for y1 in 0..n {
            for x0 in 0..n {
                for x1 in 0..n {
                    let k0 = wrap(x0 as i64 - y0 as i64, n);
                    let k1 = wrap(x1 as i64 - y1 as i64, n);
                    for l in 0..d_out {
                        let mut acc = out.real_at((l * n + y0) * n + y1);
                        for j in 0..d_in {
                            acc += f.real_at((j * n + x0) * n + x1)
                                * psi.real_at(((l * d_in + j) * n + k0) * n + k1);
                        }
                        out.set_real((l * n + y0) * n + y1, acc);
                    }
                }
            }
        }
    }
    Ok(out)
}
