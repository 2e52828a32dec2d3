//! The groups p4 and p4m and their actions on planar fields, group-stacked
//! feature maps, and centered spectral bands.
//!
//! A stabilizer element is a 90-degree rotation count plus an optional
//! horizontal reflection; a group element adds an integer translation.
//! Physical fields rotate about the grid center (array rotation), spectra
//! rotate about the origin by modular index arithmetic; the two differ by
//! a one-pixel circular shift, and every layer is exactly equivariant to
//! circular shifts, so end-to-end equivariance holds either way.

use crate::error::{Error, Result};
use crate::spectral::wrap;
use crate::tensor::{numel_of, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    None,
    P4,
    P4m,
}

impl Group {
    /// Size of the stabilizer: |S_G|.
    pub fn d_g(self) -> usize {
        match self {
            Group::None => 1,
            Group::P4 => 4,
            Group::P4m => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::None => "none",
            Group::P4 => "p4",
            Group::P4m => "p4m",
        }
    }

    /// All stabilizer elements in canonical axis order.
    pub fn stabilizers(self) -> Vec<Stab> {
        (0..self.d_g()).map(|i| Stab::from_index(self, i)).collect()
    }
}

/// Element of the stabilizer S_G: `rot` quarter turns followed by an
/// optional horizontal reflection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stab {
    group: Group,
    rot: u8,
    refl: bool,
}

impl Stab {
    pub fn identity(group: Group) -> Stab {
        Stab {
            group,
            rot: 0,
            refl: false,
        }
    }

    pub fn identity_p4() -> Stab {
        Stab::identity(Group::P4)
    }

    pub fn p4(rot: usize) -> Stab {
        Stab {
            group: Group::P4,
            rot: (rot % 4) as u8,
            refl: false,
        }
    }

    pub fn p4m(rot: usize, refl: bool) -> Stab {
        Stab {
            group: Group::P4m,
            rot: (rot % 4) as u8,
            refl,
        }
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn rot(&self) -> usize {
        self.rot as usize
    }

    pub fn refl(&self) -> bool {
        self.refl
    }

    /// Canonical position on the stabilizer axis: unreflected rotations
    /// 0..3 first, then (for p4m) the reflected ones.
    pub fn index(&self) -> usize {
        (self.refl as usize) * 4 + self.rot as usize
    }

    pub fn from_index(group: Group, idx: usize) -> Stab {
        assert!(idx < group.d_g(), "stabilizer index {idx} out of range");
        match group {
            Group::None => Stab::identity(group),
            Group::P4 => Stab::p4(idx),
            Group::P4m => Stab::p4m(idx % 4, idx >= 4),
        }
    }

    /// Representing 2x2 integer matrix: Flip^(refl) * Rot90^(rot).
    pub fn matrix(&self) -> [[i64; 2]; 2] {
        let rot90 = [[0i64, -1], [1, 0]];
        let flip = [[-1i64, 0], [0, 1]];
        let mut m = [[1i64, 0], [0, 1]];
        for _ in 0..self.rot {
            m = mat_mul(rot90, m);
        }
        if self.refl {
            m = mat_mul(flip, m);
        }
        m
    }
}

fn mat_mul(a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Composition: matrix(compose(a, b)) = matrix(a) * matrix(b).
pub fn stab_compose(a: &Stab, b: &Stab) -> Result<Stab> {
    if a.group != b.group {
        return Err(Error::MixedGroups(a.group.name(), b.group.name()));
    }
    // Moving a reflection past r quarter turns negates the turn count.
    let rot = if b.refl {
        ((4 - a.rot) % 4 + b.rot) % 4
    } else {
        (a.rot + b.rot) % 4
    };
    Ok(Stab {
        group: a.group,
        rot,
        refl: a.refl != b.refl,
    })
}

pub fn stab_inverse(a: &Stab) -> Stab {
    let rot = if a.refl { a.rot } else { (4 - a.rot) % 4 };
    Stab {
        group: a.group,
        rot,
        refl: a.refl,
    }
}

/// A group element g = x_g s_g: stabilizer part plus integer translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupElement {
    pub stab: Stab,
    pub trans: [i64; 2],
}

impl GroupElement {
    pub fn new(stab: Stab, trans: [i64; 2]) -> GroupElement {
        GroupElement { stab, trans }
    }

    /// Stabilizer-only element (zero translation).
    pub fn pure(stab: Stab) -> GroupElement {
        GroupElement { stab, trans: [0, 0] }
    }
}

/// How a stabilizer transforms translation offsets; used to compose full
/// group elements so that act_plane is a homomorphism.
fn offset_apply(s: &Stab, v: [i64; 2]) -> [i64; 2] {
    let mut out = v;
    for _ in 0..s.rot {
        out = [-out[1], out[0]];
    }
    if s.refl {
        out = [out[0], -out[1]];
    }
    out
}

pub fn compose(g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
    let stab = stab_compose(&g.stab, &h.stab)?;
    let sv = offset_apply(&g.stab, h.trans);
    Ok(GroupElement {
        stab,
        trans: [g.trans[0] + sv[0], g.trans[1] + sv[1]],
    })
}

pub fn inverse(g: &GroupElement) -> GroupElement {
    let stab = stab_inverse(&g.stab);
    let sv = offset_apply(&stab, g.trans);
    GroupElement {
        stab,
        trans: [-sv[0], -sv[1]],
    }
}

#[derive(Clone, Copy)]
enum Convention {
    /// Array rotation about the grid center: (i, j) <- (j, n-1-i).
    Center,
    /// Modular rotation about the origin: (i, j) <- (j, -i mod n).
    Modular,
}

/// Source coordinate feeding destination `p` under the stabilizer part of
/// act_plane (center convention).
fn plane_source(s: &Stab, p: (i64, i64), n0: usize, n1: usize, conv: Convention) -> (usize, usize) {
    let (mut i, mut j) = p;
    // Undo the flip first, then the rotations, mirroring application order.
    if s.refl {
        j = match conv {
            Convention::Center => n1 as i64 - 1 - j,
            Convention::Modular => -j,
        };
    }
    for _ in 0..s.rot {
        let (pi, pj) = (i, j);
        match conv {
            Convention::Center => {
                i = pj;
                j = n0 as i64 - 1 - pi;
            }
            Convention::Modular => {
                i = pj;
                j = -pi;
            }
        }
    }
    (wrap(i, n0), wrap(j, n1))
}

fn act_plane_impl(g: &GroupElement, x: &Tensor, conv: Convention) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(Error::invalid(format!(
            "act_plane expects at least 2 spatial axes, got {shape:?}"
        )));
    }
    let n0 = shape[shape.len() - 2];
    let n1 = shape[shape.len() - 1];
    if g.stab.rot != 0 && n0 != n1 {
        return Err(Error::invalid(format!(
            "rotations require square spatial extents, got {n0}x{n1}"
        )));
    }
    let batch = numel_of(&shape[..shape.len() - 2]);
    let lanes = x.dtype().lanes();
    let mut out = Tensor::zeros(x.dtype(), shape);

    // Precompute the source offset for every destination cell.
    let mut src_of = vec![0usize; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            // Undo the translation, then the stabilizer.
            let ui = i as i64 - g.trans[0];
            let uj = j as i64 - g.trans[1];
            let (si, sj) = plane_source(&g.stab, (ui, uj), n0, n1, conv);
            src_of[i * n1 + j] = si * n1 + sj;
        }
    }

    let src = x.data();
    let dst = out.data_mut();
    for b in 0..batch {
        let base = b * n0 * n1;
        for (d, &s) in src_of.iter().enumerate() {
            let doff = (base + d) * lanes;
            let soff = (base + s) * lanes;
            dst[doff..doff + lanes].copy_from_slice(&src[soff..soff + lanes]);
        }
    }
    Ok(out)
}

/// Act on a planar field: rotate/reflect about the grid center, then
/// translate circularly. Leading axes are batch.
pub fn act_plane(g: &GroupElement, x: &Tensor) -> Result<Tensor> {
    act_plane_impl(g, x, Convention::Center)
}

/// Origin-centered variant with modular index arithmetic; this is the
/// action the Fourier transform commutes with, and the one the solver's
/// closure test uses.
pub fn act_plane_modular(g: &GroupElement, x: &Tensor) -> Result<Tensor> {
    act_plane_impl(g, x, Convention::Modular)
}

/// Source coordinate map of `act_plane_modular` for a pure stabilizer.
pub fn modular_source(s: &Stab, p: (i64, i64), n: usize) -> (usize, usize) {
    plane_source(s, p, n, n, Convention::Modular)
}

fn act_gstack_impl(g: &GroupElement, f: &Tensor, conv: Convention) -> Result<Tensor> {
    let shape = f.shape();
    if shape.len() != 4 {
        return Err(Error::invalid(format!(
            "act_gstack expects a (d_z, d_g, n, n) stack, got {shape:?}"
        )));
    }
    let d_g = g.stab.group.d_g();
    if shape[1] != d_g {
        return Err(Error::invalid(format!(
            "stack has {} stabilizer slices but group {} needs {d_g}",
            shape[1],
            g.stab.group.name()
        )));
    }
    let (d_z, n0, n1) = (shape[0], shape[2], shape[3]);
    if g.stab.rot != 0 && n0 != n1 {
        return Err(Error::invalid(format!(
            "rotations require square spatial extents, got {n0}x{n1}"
        )));
    }
    let lanes = f.dtype().lanes();
    let mut out = Tensor::zeros(f.dtype(), shape);

    let mut src_of = vec![0usize; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let ui = i as i64 - g.trans[0];
            let uj = j as i64 - g.trans[1];
            let (si, sj) = plane_source(&g.stab, (ui, uj), n0, n1, conv);
            src_of[i * n1 + j] = si * n1 + sj;
        }
    }

    let plane = n0 * n1;
    let src = f.data();
    let dst = out.data_mut();
    for t in 0..d_g {
        // Output slice t draws from slice t * s_g; rotating a stack
        // cyclically advances the pose coordinate.
        let src_slice = stab_compose(&Stab::from_index(g.stab.group, t), &g.stab)
            .expect("same group")
            .index();
        for z in 0..d_z {
            let sbase = (z * d_g + src_slice) * plane;
            let dbase = (z * d_g + t) * plane;
            for (d, &s) in src_of.iter().enumerate() {
                let doff = (dbase + d) * lanes;
                let soff = (sbase + s) * lanes;
                dst[doff..doff + lanes].copy_from_slice(&src[soff..soff + lanes]);
            }
        }
    }
    Ok(out)
}

/// Act on a group-stacked feature map (d_z, d_g, n, n): the spatial
/// transform of act_plane on every slice plus the stabilizer-axis
/// permutation.
pub fn act_gstack(g: &GroupElement, f: &Tensor) -> Result<Tensor> {
    act_gstack_impl(g, f, Convention::Center)
}

/// Modular-rotation variant of `act_gstack` (used by the oracle tests).
pub fn act_gstack_modular(g: &GroupElement, f: &Tensor) -> Result<Tensor> {
    act_gstack_impl(g, f, Convention::Modular)
}

/// Source coordinate map of `act_spectrum` in centered band coordinates.
pub fn centered_source(s: &Stab, xi: (i64, i64)) -> (i64, i64) {
    let (mut a, mut b) = xi;
    if s.refl {
        b = -b;
    }
    for _ in 0..s.rot {
        let (pa, pb) = (a, b);
        a = pb;
        b = -pa;
    }
    (a, b)
}

/// Act on a centered odd square spectral band: pure index permutation,
/// no phase factors, no conjugation.
pub fn act_spectrum(s: &Stab, band: &Tensor) -> Result<Tensor> {
    let shape = band.shape();
    if shape.len() < 2 {
        return Err(Error::invalid("act_spectrum expects at least 2 axes".to_string()));
    }
    let bw0 = shape[shape.len() - 2];
    let bw1 = shape[shape.len() - 1];
    if bw0 != bw1 || bw0 % 2 == 0 {
        return Err(Error::invalid(format!(
            "act_spectrum expects an odd square band, got {bw0}x{bw1}"
        )));
    }
    let bw = bw0;
    let c = (bw / 2) as i64;
    let batch = numel_of(&shape[..shape.len() - 2]);
    let lanes = band.dtype().lanes();
    let mut out = Tensor::zeros(band.dtype(), shape);

    let mut src_of = vec![0usize; bw * bw];
    for ia in 0..bw {
        for ib in 0..bw {
            let (sa, sb) = centered_source(s, (ia as i64 - c, ib as i64 - c));
            src_of[ia * bw + ib] = ((sa + c) as usize) * bw + (sb + c) as usize;
        }
    }

    let src = band.data();
    let dst = out.data_mut();
    for bt in 0..batch {
        let base = bt * bw * bw;
        for (d, &sp) in src_of.iter().enumerate() {
            let doff = (base + d) * lanes;
            let soff = (base + sp) * lanes;
            dst[doff..doff + lanes].copy_from_slice(&src[soff..soff + lanes]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::spectral::{dft2, idft2, pad_band, Layout};
    use crate::tensor::Dtype;

    fn random_real(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = numel_of(shape);
        Tensor::from_real(shape, (0..n).map(|_| rng.normal()).collect())
    }

    #[test]
    fn p4_rotations_compose_mod_4() {
        let a = Stab::p4(1);
        let b = Stab::p4(3);
        assert_eq!(stab_compose(&a, &b).unwrap(), Stab::p4(0));
    }

    #[test]
    fn reflection_is_an_involution() {
        let m = Stab::p4m(0, true);
        assert_eq!(stab_compose(&m, &m).unwrap(), Stab::p4m(0, false));
    }

    #[test]
    fn mixed_groups_are_rejected() {
        let a = Stab::p4(1);
        let b = Stab::p4m(1, false);
        assert!(stab_compose(&a, &b).is_err());
    }

    #[test]
    fn all_p4m_products_match_matrix_oracle() {
        for i in 0..8 {
            for j in 0..8 {
                let a = Stab::from_index(Group::P4m, i);
                let b = Stab::from_index(Group::P4m, j);
                let c = stab_compose(&a, &b).unwrap();
                assert_eq!(
                    c.matrix(),
                    mat_mul(a.matrix(), b.matrix()),
                    "i={i} j={j}"
                );
            }
        }
    }

    #[test]
    fn inverse_matches_matrix_transpose() {
        for i in 0..8 {
            let a = Stab::from_index(Group::P4m, i);
            let inv = stab_inverse(&a);
            assert_eq!(
                stab_compose(&a, &inv).unwrap(),
                Stab::identity(Group::P4m)
            );
            let m = a.matrix();
            let t = [[m[0][0], m[1][0]], [m[0][1], m[1][1]]];
            assert_eq!(inv.matrix(), t);
        }
    }

    #[test]
    fn quarter_turn_on_2x2() {
        let x = Tensor::from_real(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let g = GroupElement::pure(Stab::p4(1));
        let y = act_plane(&g, &x).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn horizontal_flip_reverses_last_axis() {
        let x = Tensor::from_real(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = GroupElement::pure(Stab::p4m(0, true));
        let y = act_plane(&g, &x).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
    }

    #[test]
    fn identity_leaves_input_unchanged() {
        let mut rng = Rng::new(1);
        let x = random_real(&[3, 5, 5], &mut rng);
        let g = GroupElement::pure(Stab::identity(Group::P4m));
        assert_eq!(act_plane(&g, &x).unwrap(), x);
    }

    #[test]
    fn nontrivial_rotation_rejects_non_square() {
        let x = Tensor::zeros(Dtype::Real, &[2, 3]);
        let g = GroupElement::pure(Stab::p4(1));
        assert!(act_plane(&g, &x).is_err());
    }

    #[test]
    fn act_plane_is_a_homomorphism() {
        let mut rng = Rng::new(2);
        let x = random_real(&[5, 5], &mut rng);
        for gi in 0..8 {
            for hi in 0..8 {
                let g = GroupElement::new(
                    Stab::from_index(Group::P4m, gi),
                    [rng.below(5) as i64, rng.below(5) as i64],
                );
                let h = GroupElement::new(
                    Stab::from_index(Group::P4m, hi),
                    [rng.below(5) as i64, rng.below(5) as i64],
                );
                let gh = compose(&g, &h).unwrap();
                let lhs = act_plane(&g, &act_plane(&h, &x).unwrap()).unwrap();
                let rhs = act_plane(&gh, &x).unwrap();
                assert_eq!(lhs, rhs, "g={gi} h={hi}");
                let lhs_m = act_plane_modular(&g, &act_plane_modular(&h, &x).unwrap()).unwrap();
                let rhs_m = act_plane_modular(&gh, &x).unwrap();
                assert_eq!(lhs_m, rhs_m, "modular g={gi} h={hi}");
            }
        }
    }

    #[test]
    fn act_inverse_undoes_act_exactly() {
        let mut rng = Rng::new(3);
        let x = random_real(&[2, 8, 6, 6], &mut rng);
        for gi in 0..8 {
            let g = GroupElement::new(Stab::from_index(Group::P4m, gi), [2, -5]);
            let ginv = inverse(&g);
            let back = act_gstack(&ginv, &act_gstack(&g, &x).unwrap()).unwrap();
            assert_eq!(back, x, "gi={gi}");
        }
    }

    #[test]
    fn gstack_quarter_turn_cycles_slices() {
        // p4, s_g = 1 on a stack [A, B, C, D] yields
        // [rot1 B, rot1 C, rot1 D, rot1 A].
        let mut rng = Rng::new(4);
        let slices: Vec<Tensor> = (0..4).map(|_| random_real(&[3, 3], &mut rng)).collect();
        let mut stack = Tensor::zeros(Dtype::Real, &[1, 4, 3, 3]);
        for (s, sl) in slices.iter().enumerate() {
            for p in 0..9 {
                stack.set_real(s * 9 + p, sl.real_at(p));
            }
        }
        let g = GroupElement::pure(Stab::p4(1));
        let out = act_gstack(&g, &stack).unwrap();
        for t in 0..4 {
            let expect = act_plane(&g, &slices[(t + 1) % 4]).unwrap();
            for p in 0..9 {
                assert_eq!(out.real_at(t * 9 + p), expect.real_at(p), "t={t}");
            }
        }
    }

    #[test]
    fn gstack_identity_and_wrong_dg() {
        let mut rng = Rng::new(5);
        let x = random_real(&[2, 4, 4, 4], &mut rng);
        let id = GroupElement::pure(Stab::identity_p4());
        assert_eq!(act_gstack(&id, &x).unwrap(), x);
        let bad = GroupElement::pure(Stab::identity(Group::P4m));
        assert!(act_gstack(&bad, &x).is_err());
    }

    #[test]
    fn gstack_homomorphism_over_all_p4m_pairs() {
        let mut rng = Rng::new(6);
        let x = random_real(&[2, 8, 5, 5], &mut rng);
        for gi in 0..8 {
            for hi in 0..8 {
                let g = GroupElement::new(
                    Stab::from_index(Group::P4m, gi),
                    [rng.below(5) as i64, rng.below(5) as i64],
                );
                let h = GroupElement::new(
                    Stab::from_index(Group::P4m, hi),
                    [rng.below(5) as i64, rng.below(5) as i64],
                );
                let gh = compose(&g, &h).unwrap();
                let lhs = act_gstack(&g, &act_gstack(&h, &x).unwrap()).unwrap();
                let rhs = act_gstack(&gh, &x).unwrap();
                assert_eq!(lhs, rhs, "g={gi} h={hi}");
            }
        }
    }

    #[test]
    fn spectrum_dc_is_fixed_and_rot_moves_entries() {
        let mut rng = Rng::new(7);
        let band = random_real(&[3, 3], &mut rng).to_complex();
        for i in 0..8 {
            let s = Stab::from_index(Group::P4m, i);
            let out = act_spectrum(&s, &band).unwrap();
            assert_eq!(out.complex_at(4), band.complex_at(4), "dc moved by {i}");
        }
        // k = 2 band, rot 1: centered (1, 0) moves to centered (0, 1).
        let s = Stab::p4(1);
        let out = act_spectrum(&s, &band).unwrap();
        // centered (1,0) = array (2,1); centered (0,1) = array (1,2)
        assert_eq!(out.complex_at(1 * 3 + 2), band.complex_at(2 * 3 + 1));
    }

    #[test]
    fn spectrum_rejects_even_band() {
        let band = Tensor::zeros(Dtype::Complex, &[4, 4]);
        assert!(act_spectrum(&Stab::p4(1), &band).is_err());
    }

    #[test]
    fn spectrum_action_matches_physical_modular_rotation() {
        // idft2(pad_band(act_spectrum(s, B))) equals the modular plane
        // action of s on idft2(pad_band(B)).
        let mut rng = Rng::new(8);
        let k = 3;
        let bw = 2 * k - 1;
        let n = 8;
        let band = {
            let re = random_real(&[bw, bw], &mut rng);
            let im = random_real(&[bw, bw], &mut rng);
            let vals: Vec<num_complex::Complex64> = re
                .data()
                .iter()
                .zip(im.data())
                .map(|(&r, &i)| num_complex::Complex64::new(r, i))
                .collect();
            Tensor::from_complex(&[bw, bw], vals)
        };
        for i in 0..8 {
            let s = Stab::from_index(Group::P4m, i);
            let lhs = idft2(
                &pad_band(&act_spectrum(&s, &band).unwrap(), (n, n)).unwrap(),
                Layout::Centered,
            )
            .unwrap();
            let rhs = act_plane_modular(
                &GroupElement::pure(s),
                &idft2(&pad_band(&band, (n, n)).unwrap(), Layout::Centered).unwrap(),
            )
            .unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10, "stab {i}");
        }
    }

    #[test]
    fn spectrum_action_commutes_with_hermitian_projection() {
        let mut rng = Rng::new(9);
        let bw = 5;
        let vals: Vec<num_complex::Complex64> = (0..bw * bw)
            .map(|_| num_complex::Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let band = Tensor::from_complex(&[bw, bw], vals);
        let project = |b: &Tensor| -> Tensor {
            let mut out = Tensor::zeros(Dtype::Complex, &[bw, bw]);
            for a in 0..bw {
                for c in 0..bw {
                    let v = b.complex_at(a * bw + c);
                    let m = b.complex_at((bw - 1 - a) * bw + (bw - 1 - c)).conj();
                    out.set_complex(a * bw + c, 0.5 * (v + m));
                }
            }
            out
        };
        for i in 0..8 {
            let s = Stab::from_index(Group::P4m, i);
            let lhs = act_spectrum(&s, &project(&band)).unwrap();
            let rhs = project(&act_spectrum(&s, &band).unwrap());
            assert_eq!(lhs, rhs, "stab {i}");
        }
    }

    #[test]
    fn dft_commutes_with_act_spectrum_convention() {
        // The same index map drives spectra and modular physical fields:
        // dft2(x o sigma) = dft2(x) o sigma, checked through the band
        // machinery in spectrum_action_matches_physical_modular_rotation;
        // here we check the standard-layout full-grid statement.
        let mut rng = Rng::new(10);
        let n = 6;
        let x = random_real(&[n, n], &mut rng).to_complex();
        for i in 0..8 {
            let g = GroupElement::pure(Stab::from_index(Group::P4m, i));
            let lhs = dft2(&act_plane_modular(&g, &x).unwrap(), Layout::Standard).unwrap();
            let rhs = act_plane_modular(&g, &dft2(&x, Layout::Standard).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10, "stab {i}");
        }
    }
}
