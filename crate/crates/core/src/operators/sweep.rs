//! Pair sweep shared by every Boltzmann-type operator.
//!
//! For an integer difference `d = v - v*` and a hemisphere node `σ`, the
//! post-collision offset `δ = (|d|σ - d)/2` (grid units) is the same for every
//! pair, so `f(v + δ)` and `f(v - d - δ)` are whole shifted fields computed
//! with separable interpolation passes. Only `d` in a half-space is visited;
//! the mirrored pair `(v*, v, -σ)` swaps the roles of the two post-collision
//! points and is handled by the same combo.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::grid::{Interpolation, VelocityGrid};
use crate::kernel::{component_nodes, AngularQuadrature, KernelConfig, ThetaNode, Vec3};

/// Hemisphere frame `(ω, e1, e2)` for an integer direction.
pub(crate) type Frame = [Vec3; 3];

/// Signed permutation taking the canonical representative (absolute values
/// sorted descending) to `d`: `d[perm[k]] = sign[k] * c[k]`.
fn canonical(d: [i64; 3]) -> ([i64; 3], [usize; 3], [f64; 3]) {
    let mut perm = [0usize, 1, 2];
    perm.sort_by(|&a, &b| d[b].abs().cmp(&d[a].abs()).then(a.cmp(&b)));
    let c = [d[perm[0]].abs(), d[perm[1]].abs(), d[perm[2]].abs()];
    let sign = [0, 1, 2].map(|k| if d[perm[k]] < 0 { -1.0 } else { 1.0 });
    (c, perm, sign)
}

fn unit(v: Vec3) -> Vec3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Frame of a canonical direction `c0 >= c1 >= c2 >= 0`. `e1` lies in a
/// mirror plane of the direction's symmetry group, so the node set is mapped
/// onto itself by every lattice symmetry fixing `c` when `n_phi % 12 == 0`.
fn canonical_frame(c: [i64; 3]) -> Frame {
    let [a, b, z] = c.map(|x| x as f64);
    let w = unit([a, b, z]);
    let e1 = if b == 0.0 {
        [0.0, 1.0, 0.0]
    } else if z == 0.0 {
        if a == b { [0.0, 0.0, 1.0] } else { unit([-b, a, 0.0]) }
    } else if a == b && b == z {
        unit([1.0, 1.0, -2.0])
    } else if a == b {
        unit([z, z, -2.0 * a])
    } else if b == z {
        unit([2.0 * b, -a, -a])
    } else {
        let (e1, _) = crate::kernel::orthonormal_frame(w);
        e1
    };
    [w, e1, cross(w, e1)]
}

pub(crate) fn frame_of(d: [i64; 3]) -> Frame {
    let (c, perm, sign) = canonical(d);
    let f = canonical_frame(c);
    f.map(|x| {
        let mut y = [0.0; 3];
        for k in 0..3 {
            y[perm[k]] = sign[k] * x[k];
        }
        y
    })
}

/// One `(component, θ, φ)` node with its full weight `w · B_i · 2π/n_phi`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SigmaNode {
    pub cos_t: f64,
    pub sin_t: f64,
    pub cos_p: f64,
    pub sin_p: f64,
    pub wb: f64,
}

/// Hemisphere nodes for every squared integer length `|d|²`.
pub(crate) struct NodeTable {
    by_len2: Vec<Vec<SigmaNode>>,
}

impl NodeTable {
    pub fn new(cfg: &KernelConfig, quad: &AngularQuadrature, comps: &[usize], grid: &VelocityGrid) -> Self {
        let n = grid.n as i64;
        let max2 = (3 * (n - 1) * (n - 1)) as usize;
        let h = grid.h();
        let nphi = quad.n_phi;
        let phis: Vec<(f64, f64)> = (0..nphi).map(|m| (2.0 * PI * m as f64 / nphi as f64).sin_cos()).collect();
        let dphi = 2.0 * PI / nphi as f64;
        // Only lengths realised by some lattice vector are filled.
        let mut present = vec![false; max2 + 1];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    present[(a * a + b * b + c * c) as usize] = true;
                }
            }
        }
        let mut buf: Vec<ThetaNode> = Vec::new();
        let by_len2 = (0..=max2)
            .map(|l2| {
                let mut out = Vec::new();
                if l2 == 0 || !present[l2] {
                    return out;
                }
                let z = (l2 as f64).sqrt() * h;
                for &i in comps {
                    component_nodes(cfg, i, z, quad, &mut buf);
                    for nd in &buf {
                        for &(sp, cp) in &phis {
                            out.push(SigmaNode {
                                cos_t: nd.cos_theta(),
                                sin_t: nd.sin_theta(),
                                cos_p: cp,
                                sin_p: sp,
                                wb: nd.weight * nd.b * dphi,
                            });
                        }
                    }
                }
                out
            })
            .collect();
        NodeTable { by_len2 }
    }

    pub fn nodes(&self, d: [i64; 3]) -> &[SigmaNode] {
        &self.by_len2[(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as usize]
    }
}

/// Half-space representatives of the nonzero difference vectors.
pub(crate) fn half_differences(n: usize) -> Vec<[i64; 3]> {
    let m = n as i64 - 1;
    let mut out = Vec::new();
    for dz in -m..=m {
        for dy in -m..=m {
            for dx in -m..=m {
                let d = [dx, dy, dz];
                if (dz, dy, dx) > (0, 0, 0) {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// Zero-padded copy (two cells per side) of a field.
pub(crate) struct Padded {
    pub np: usize,
    pub data: Vec<f64>,
}

impl Padded {
    pub fn new(values: &[f64], n: usize) -> Self {
        let np = n + 4;
        let mut data = vec![0.0; np * np * np];
        for k in 0..n {
            for j in 0..n {
                let src = n * (j + n * k);
                let dst = 2 + np * ((j + 2) + np * (k + 2));
                data[dst..dst + n].copy_from_slice(&values[src..src + n]);
            }
        }
        Padded { np, data }
    }
}

/// One axis of a shift: outputs `vlo..vhi` (box-local) read padded indices
/// starting at `start`, with weights shared by every output.
struct AxisShift {
    vlo: usize,
    vhi: usize,
    start: usize,
    w: [f64; 4],
}

/// Since the grid is uniform and `δ` is fixed, the fractional offset and hence
/// the stencil weights are the same for every output node.
fn axis_shift(n: usize, lo: usize, hi: usize, delta: f64, scheme: Interpolation) -> Option<(AxisShift, usize)> {
    let fl = delta.floor();
    let (w, taps, off) = scheme.weights(delta - fl);
    let fl = fl as i64;
    // x = i + delta lies in [0, n) iff 0 <= i + fl <= n - 1.
    let a = (lo as i64).max(-fl);
    let b = (hi as i64).min(n as i64 - fl);
    if b <= a {
        return None;
    }
    let start = (a + fl + off as i64 + 2) as usize;
    Some((AxisShift { vlo: a as usize - lo, vhi: b as usize - lo, start, w }, taps))
}

#[derive(Default)]
pub(crate) struct Shifter {
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl Shifter {
    /// `out[local] = interp(field, v + delta)` over the box `lo..hi`; zero where
    /// `v + delta` leaves the grid.
    #[allow(clippy::too_many_arguments)]
    pub fn shift(
        &mut self,
        src: &Padded,
        n: usize,
        delta: Vec3,
        lo: [usize; 3],
        hi: [usize; 3],
        scheme: Interpolation,
        out: &mut Vec<f64>,
    ) {
        let dims = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        out.clear();
        out.resize(dims[0] * dims[1] * dims[2], 0.0);
        let (Some((p0, taps)), Some((p1, _)), Some((p2, _))) = (
            axis_shift(n, lo[0], hi[0], delta[0], scheme),
            axis_shift(n, lo[1], hi[1], delta[1], scheme),
            axis_shift(n, lo[2], hi[2], delta[2], scheme),
        ) else {
            return;
        };
        let np = src.np;
        let nx = p0.vhi - p0.vlo;
        let ny = p1.vhi - p1.vlo;
        let nz = p2.vhi - p2.vlo;
        let (ny_need, nz_need) = (ny + taps - 1, nz + taps - 1);
        let w0 = p0.w;
        self.t1.clear();
        self.t1.resize(nx * ny_need * nz_need, 0.0);
        for r2 in 0..nz_need {
            for r1 in 0..ny_need {
                let row = p0.start + np * ((p1.start + r1) + np * (p2.start + r2));
                let dst = nx * (r1 + ny_need * r2);
                let t1 = &mut self.t1[dst..dst + nx];
                if taps == 4 {
                    let s = &src.data[row..row + nx + 3];
                    for (q0, t) in t1.iter_mut().enumerate() {
                        *t = w0[0] * s[q0] + w0[1] * s[q0 + 1] + w0[2] * s[q0 + 2] + w0[3] * s[q0 + 3];
                    }
                } else {
                    let s = &src.data[row..row + nx + 1];
                    for (q0, t) in t1.iter_mut().enumerate() {
                        *t = w0[0] * s[q0] + w0[1] * s[q0 + 1];
                    }
                }
            }
        }
        self.t2.clear();
        self.t2.resize(nx * ny * nz_need, 0.0);
        for r2 in 0..nz_need {
            for q1 in 0..ny {
                let dst = nx * (q1 + ny * r2);
                let t2 = &mut self.t2[dst..dst + nx];
                for bb in 0..taps {
                    let wb = p1.w[bb];
                    let srow = nx * ((q1 + bb) + ny_need * r2);
                    for (t, &x) in t2.iter_mut().zip(&self.t1[srow..srow + nx]) {
                        *t += wb * x;
                    }
                }
            }
        }
        for q2 in 0..nz {
            for q1 in 0..ny {
                let dst = (p0.vlo) + dims[0] * ((p1.vlo + q1) + dims[1] * (p2.vlo + q2));
                let o = &mut out[dst..dst + nx];
                for c in 0..taps {
                    let wc = p2.w[c];
                    let srow = nx * (q1 + ny * (q2 + c));
                    for (t, &x) in o.iter_mut().zip(&self.t2[srow..srow + nx]) {
                        *t += wc * x;
                    }
                }
            }
        }
    }
}

/// Everything a visitor sees for one `(d, σ)` combination.
pub(crate) struct Combo<'a> {
    pub n: usize,
    pub d: [i64; 3],
    /// Flat index offset of `v*` relative to `v`.
    pub dflat: isize,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub wb: f64,
    /// `δ` in grid units.
    pub delta: Vec3,
    /// Per field: values at `v + δ` and at `v* - δ` over the box.
    pub at_vp: &'a [Vec<f64>],
    pub at_vsp: &'a [Vec<f64>],
    /// `keep[i]`: node `i` may act as a collision partner.
    pub keep: Option<&'a [bool]>,
}

pub(crate) trait Visitor: Sync {
    type Acc: Send;
    fn new_acc(&self) -> Self::Acc;
    fn visit(&self, acc: &mut Self::Acc, combo: &Combo);
    fn merge(&self, into: &mut Self::Acc, from: Self::Acc);
}

pub(crate) struct SweepSpec<'a> {
    pub grid: VelocityGrid,
    pub fields: Vec<&'a [f64]>,
    pub scheme: Interpolation,
    pub keep: Option<Vec<bool>>,
}

const CHUNK: usize = 8;
const BATCH: usize = 64;

/// Visits every `(d, σ)` combination. Chunks are merged in a fixed order, so
/// the result does not depend on the number of worker threads.
pub(crate) fn sweep<V: Visitor>(spec: &SweepSpec, table: &NodeTable, visitor: &V) -> V::Acc {
    let g = spec.grid;
    let n = g.n;
    let padded: Vec<Padded> = spec.fields.iter().map(|f| Padded::new(f, n)).collect();
    let ds = half_differences(n);
    // Support bounding box of the partner mask.
    let support = spec.keep.as_ref().map(|k| bounding_box(k, &g));
    if let Some(None) = support {
        return visitor.new_acc();
    }
    let support = support.flatten();
    let keep = spec.keep.as_deref();
    let chunks: Vec<&[[i64; 3]]> = ds.chunks(CHUNK).collect();
    let mut total = visitor.new_acc();
    for batch in chunks.chunks(BATCH) {
        let parts: Vec<V::Acc> = batch
            .par_iter()
            .map(|chunk| {
                let mut acc = visitor.new_acc();
                let mut sh = Shifter::default();
                let mut vp: Vec<Vec<f64>> = vec![Vec::new(); padded.len()];
                let mut vsp: Vec<Vec<f64>> = vec![Vec::new(); padded.len()];
                for &d in chunk.iter() {
                    let Some((lo, hi)) = pair_box(n, d, support) else { continue };
                    let nodes = table.nodes(d);
                    if nodes.is_empty() {
                        continue;
                    }
                    let fr = frame_of(d);
                    let dl = ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
                    let dflat = d[0] as isize + n as isize * (d[1] as isize + n as isize * d[2] as isize);
                    for nd in nodes {
                        let mut delta = [0.0; 3];
                        for k in 0..3 {
                            let sigma = nd.cos_t * fr[0][k] + nd.sin_t * (nd.cos_p * fr[1][k] + nd.sin_p * fr[2][k]);
                            delta[k] = 0.5 * (dl * sigma - d[k] as f64);
                        }
                        let back = [-(d[0] as f64) - delta[0], -(d[1] as f64) - delta[1], -(d[2] as f64) - delta[2]];
                        for (k, p) in padded.iter().enumerate() {
                            sh.shift(p, n, delta, lo, hi, spec.scheme, &mut vp[k]);
                            sh.shift(p, n, back, lo, hi, spec.scheme, &mut vsp[k]);
                        }
                        let combo = Combo { n, d, dflat, lo, hi, wb: nd.wb, delta, at_vp: &vp, at_vsp: &vsp, keep };
                        visitor.visit(&mut acc, &combo);
                    }
                }
                acc
            })
            .collect();
        for p in parts {
            visitor.merge(&mut total, p);
        }
    }
    total
}

type BBox = Option<([usize; 3], [usize; 3])>;

fn bounding_box(keep: &[bool], g: &VelocityGrid) -> BBox {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for (i, &k) in keep.iter().enumerate() {
        if k {
            let c = g.unflatten(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
    }
    (lo[0] != usize::MAX).then_some((lo, hi))
}

/// Box of `v` with both `v` and `v - d` on the grid, reduced to pairs where
/// at least one node lies in the support box when one is given.
fn pair_box(n: usize, d: [i64; 3], support: BBox) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = d[a].max(0);
        let h = (n as i64).min(n as i64 + d[a]);
        let (l, h) = match support {
            Some((slo, shi)) => {
                // v in S, or v - d in S.
                let ul = (slo[a] as i64).min(slo[a] as i64 + d[a]);
                let uh = (shi[a] as i64).max(shi[a] as i64 + d[a]);
                (l.max(ul), h.min(uh))
            }
            None => (l, h),
        };
        if h <= l {
            return None;
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    Some((lo, hi))
}

/// Count of `(v, v*, σ)` triples a full-grid sweep visits.
pub(crate) fn full_grid_triples(table: &NodeTable, n: usize) -> u64 {
    let m = n as i64 - 1;
    let mut total = 0u64;
    for dz in -m..=m {
        for dy in -m..=m {
            for dx in -m..=m {
                let d = [dx, dy, dz];
                if d == [0, 0, 0] {
                    continue;
                }
                let overlap: i64 = d.iter().map(|&x| n as i64 - x.abs()).product();
                total += overlap as u64 * table.nodes(d).len() as u64;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{interpolate, sample, DistributionField};

    #[test]
    fn frames_are_orthonormal_and_equivariant() {
        let dot = |a: Vec3, b: Vec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        for d in [[3, 0, 0], [2, 2, 0], [1, 1, 1], [3, 1, 0], [2, 2, 1], [3, 1, 1], [3, 2, 1], [-1, 4, -2]] {
            let f = frame_of(d);
            let w = unit(d.map(|x| x as f64));
            for k in 0..3 {
                assert!((f[0][k] - w[k]).abs() < 1e-15);
            }
            assert!(dot(f[0], f[1]).abs() < 1e-15 && dot(f[0], f[2]).abs() < 1e-15 && dot(f[1], f[2]).abs() < 1e-15);
        }
        // A quarter turn about the third axis permutes components exactly.
        let d = [3, 1, 2];
        let rd = [-d[1], d[0], d[2]];
        let (f, g) = (frame_of(d), frame_of(rd));
        for k in 0..3 {
            let r = [-f[k][1], f[k][0], f[k][2]];
            assert_eq!(r, g[k]);
        }
    }

    #[test]
    fn shifted_field_matches_pointwise_interpolation() {
        let g = VelocityGrid::new(10, 3.0).unwrap();
        let f: DistributionField = sample(|v| (-(v[0] * v[0] + 0.5 * v[1] * v[1] + 2.0 * v[2] * v[2])).exp() + 0.1 * v[0], g).unwrap();
        let p = Padded::new(&f.values, g.n);
        let mut sh = Shifter::default();
        let mut out = Vec::new();
        for scheme in [Interpolation::Tricubic, Interpolation::Trilinear] {
            for delta in [[0.3, -1.7, 2.25], [-4.5, 0.0, 0.9], [9.5, 0.1, 0.1], [0.0, 0.0, 0.0]] {
                let (lo, hi) = ([1, 0, 2], [9, 7, 10]);
                sh.shift(&p, g.n, delta, lo, hi, scheme, &mut out);
                let h = g.h();
                for k in lo[2]..hi[2] {
                    for j in lo[1]..hi[1] {
                        for i in lo[0]..hi[0] {
                            let q = (i - lo[0]) + (hi[0] - lo[0]) * ((j - lo[1]) + (hi[1] - lo[1]) * (k - lo[2]));
                            let x = [g.coord(i) + delta[0] * h, g.coord(j) + delta[1] * h, g.coord(k) + delta[2] * h];
                            let want = interpolate(&f, x, scheme);
                            assert!((out[q] - want).abs() < 1e-13, "{delta:?} {i} {j} {k}: {} {want}", out[q]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn half_differences_cover_each_pair_once() {
        let ds = half_differences(8);
        assert_eq!(ds.len(), (15usize.pow(3) - 1) / 2);
        assert!(ds.iter().all(|d| !ds.contains(&[-d[0], -d[1], -d[2]])));
    }
}
