//! Cellular decompositions: time-atom chains, 2D cartesian atom grids and
//! n-dimensional cubical complexes with links and wedges.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySpec {
    /// Boundary face values are supplied with the history and held fixed.
    #[default]
    Fixed,
    /// Boundary face values are free unknowns.
    Open,
}

/// Chain of `n` time atoms `[ν⁻, ν⁺]` with half-atom lapse `a`.
///
/// Points are numbered `0..=2n`: atom `i` (0-based) has `ν⁻ = 2i`, `Cν = 2i+1`
/// and `ν⁺ = 2i+2`, so `ν⁺` and `(ν+1)⁻` share one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeComplex {
    pub n_atoms: usize,
    pub lapse: f64,
}

impl TimeComplex {
    pub fn new(n_atoms: usize, lapse: f64) -> Result<TimeComplex> {
        if n_atoms == 0 {
            return invalid("time complex needs at least one atom");
        }
        if !(lapse > 0.0 && lapse.is_finite()) {
            return invalid(format!("lapse must be positive, got {lapse}"));
        }
        Ok(TimeComplex { n_atoms, lapse })
    }

    pub fn n_points(&self) -> usize {
        2 * self.n_atoms + 1
    }

    pub fn minus(&self, atom: usize) -> usize {
        2 * atom
    }

    pub fn center(&self, atom: usize) -> usize {
        2 * atom + 1
    }

    pub fn plus(&self, atom: usize) -> usize {
        2 * atom + 2
    }

    /// `∂U = −1⁻ + n⁺` as signed point indices.
    pub fn boundary(&self) -> [(Sign, usize); 2] {
        [(Sign::Minus, 0), (Sign::Plus, 2 * self.n_atoms)]
    }

    /// Shared markers `ν⁺ = (ν+1)⁻` for `ν = 1..n-1`.
    pub fn gluing_sites(&self) -> Vec<usize> {
        (0..self.n_atoms - 1).map(|i| self.plus(i)).collect()
    }

    pub fn time(&self, point: usize) -> f64 {
        point as f64 * self.lapse
    }

    pub fn total_time(&self) -> f64 {
        2.0 * self.n_atoms as f64 * self.lapse
    }
}

/// Face of a 2D atom: axis 0 (time) or 1 (space) and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaceLabel {
    pub axis: usize,
    pub sign: Sign,
}

impl FaceLabel {
    pub const ALL: [FaceLabel; 4] = [
        FaceLabel { axis: 0, sign: Sign::Plus },
        FaceLabel { axis: 0, sign: Sign::Minus },
        FaceLabel { axis: 1, sign: Sign::Plus },
        FaceLabel { axis: 1, sign: Sign::Minus },
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face2D {
    pub axis: usize,
    /// Atom whose `+` face this is.
    pub lower: Option<usize>,
    /// Atom whose `−` face this is.
    pub upper: Option<usize>,
}

impl Face2D {
    pub fn is_interior(&self) -> bool {
        self.lower.is_some() && self.upper.is_some()
    }
}

/// Regular grid of `n0 × n1` rectangular atoms with half-spacings `h` (x⁰) and `k` (x¹).
/// Atom `(i, j)` has index `i·n1 + j` and center `((2i+1)h, (2j+1)k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianComplex2D {
    pub n0: usize,
    pub n1: usize,
    pub h: f64,
    pub k: f64,
    pub boundary: BoundarySpec,
    faces: Vec<Face2D>,
}

impl CartesianComplex2D {
    pub fn new(n0: usize, n1: usize, h: f64, k: f64, boundary: BoundarySpec) -> Result<Self> {
        if n0 == 0 || n1 == 0 {
            return invalid(format!("grid dimensions must be positive, got {n0}×{n1}"));
        }
        if !(h > 0.0 && k > 0.0 && h.is_finite() && k.is_finite()) {
            return invalid(format!("spacings must be positive, got h={h}, k={k}"));
        }
        let mut faces = Vec::with_capacity((n0 + 1) * n1 + n0 * (n1 + 1));
        for i in 0..=n0 {
            for j in 0..n1 {
                let lower = (i > 0).then(|| (i - 1) * n1 + j);
                let upper = (i < n0).then(|| i * n1 + j);
                faces.push(Face2D { axis: 0, lower, upper });
            }
        }
        for i in 0..n0 {
            for j in 0..=n1 {
                let lower = (j > 0).then(|| i * n1 + j - 1);
                let upper = (j < n1).then(|| i * n1 + j);
                faces.push(Face2D { axis: 1, lower, upper });
            }
        }
        Ok(CartesianComplex2D { n0, n1, h, k, boundary, faces })
    }

    pub fn n_atoms(&self) -> usize {
        self.n0 * self.n1
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn atom(&self, i: usize, j: usize) -> usize {
        i * self.n1 + j
    }

    pub fn coords(&self, atom: usize) -> (usize, usize) {
        (atom / self.n1, atom % self.n1)
    }

    pub fn faces(&self) -> &[Face2D] {
        &self.faces
    }

    pub fn face_info(&self, f: usize) -> Face2D {
        self.faces[f]
    }

    /// Face id of `label` on `atom`; interior faces are shared by both neighbours.
    pub fn face(&self, atom: usize, label: FaceLabel) -> usize {
        let (i, j) = self.coords(atom);
        let d = (label.sign == Sign::Plus) as usize;
        match label.axis {
            0 => (i + d) * self.n1 + j,
            _ => (self.n0 + 1) * self.n1 + i * (self.n1 + 1) + j + d,
        }
    }

    pub fn atom_faces(&self, atom: usize) -> [usize; 4] {
        FaceLabel::ALL.map(|l| self.face(atom, l))
    }

    /// Atoms sharing face `f` and the label each uses for it.
    pub fn sharing(&self, f: usize) -> Vec<(usize, FaceLabel)> {
        let fi = self.faces[f];
        let mut out = Vec::with_capacity(2);
        if let Some(a) = fi.lower {
            out.push((a, FaceLabel { axis: fi.axis, sign: Sign::Plus }));
        }
        if let Some(a) = fi.upper {
            out.push((a, FaceLabel { axis: fi.axis, sign: Sign::Minus }));
        }
        out
    }

    pub fn interior_faces(&self) -> Vec<usize> {
        (0..self.n_faces()).filter(|&f| self.faces[f].is_interior()).collect()
    }

    pub fn boundary_faces(&self) -> Vec<usize> {
        (0..self.n_faces()).filter(|&f| !self.faces[f].is_interior()).collect()
    }

    /// Number of decimation points `Cν` and `Cτ`.
    pub fn n_points(&self) -> usize {
        self.n_atoms() + self.n_faces()
    }

    pub fn atom_center(&self, atom: usize) -> (f64, f64) {
        let (i, j) = self.coords(atom);
        ((2 * i + 1) as f64 * self.h, (2 * j + 1) as f64 * self.k)
    }

    pub fn face_center(&self, f: usize) -> (f64, f64) {
        let n0_faces = (self.n0 + 1) * self.n1;
        if f < n0_faces {
            let (i, j) = (f / self.n1, f % self.n1);
            ((2 * i) as f64 * self.h, (2 * j + 1) as f64 * self.k)
        } else {
            let g = f - n0_faces;
            let (i, j) = (g / (self.n1 + 1), g % (self.n1 + 1));
            ((2 * i + 1) as f64 * self.h, (2 * j) as f64 * self.k)
        }
    }

    pub fn spec(&self) -> ComplexSpec {
        ComplexSpec::Cartesian2D { n0: self.n0, n1: self.n1, h: self.h, k: self.k, boundary: self.boundary }
    }
}

/// Face `(axis, sign)` of a cube, numbered `2·axis + [sign = +]`.
pub fn local_face(axis: usize, sign: Sign) -> usize {
    2 * axis + (sign == Sign::Plus) as usize
}

pub fn local_face_parts(lf: usize) -> (usize, Sign) {
    (lf / 2, if lf % 2 == 1 { Sign::Plus } else { Sign::Minus })
}

/// Oriented wedge in atom `atom`: `∂s = l₂⁻¹ ∘ r₂⁻¹ ∘ r₁ ∘ l₁`, from `Cν` through
/// `Cτ₁`, `Cσ`, `Cτ₂` and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wedge {
    pub atom: usize,
    pub l1: usize,
    pub l2: usize,
    pub r1: usize,
    pub r2: usize,
    pub tau1: usize,
    pub tau2: usize,
    pub sigma: usize,
    /// Stored orientation: `l₁` has the lower local link index.
    pub canonical: bool,
    pub reverse: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RLink {
    pub face: usize,
    pub sigma: usize,
}

/// Cubical complex on a `dims[0] × … × dims[n-1]` block of unit cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicalComplexND {
    pub dims: Vec<usize>,
    face_offset: Vec<usize>,
    sigma_offset: Vec<((usize, usize), usize)>,
    n_faces: usize,
    n_sigmas: usize,
    face_interior: Vec<bool>,
    face_atoms: Vec<Vec<usize>>,
    sigma_interior: Vec<bool>,
    rlinks: Vec<RLink>,
    wedges: Vec<Wedge>,
    by_l1: Vec<Vec<usize>>,
    by_r1: Vec<Vec<usize>>,
    by_r2: Vec<Vec<usize>>,
    by_sigma: Vec<Vec<usize>>,
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn encode(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &s)| acc * s + i)
}

fn decode(shape: &[usize], mut id: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        out[d] = id % shape[d];
        id /= shape[d];
    }
    out
}

impl CubicalComplexND {
    pub fn new(dims: &[usize]) -> Result<Self> {
        let n = dims.len();
        if n < 2 {
            return invalid("cubical complex needs dimension at least 2 for wedges");
        }
        if dims.iter().any(|&d| d == 0) {
            return invalid(format!("dims must be positive, got {dims:?}"));
        }
        let dims = dims.to_vec();
        let mut face_offset = Vec::with_capacity(n);
        let mut off = 0;
        for a in 0..n {
            face_offset.push(off);
            let mut s = dims.clone();
            s[a] += 1;
            off += shape_len(&s);
        }
        let n_faces = off;
        let mut sigma_offset = Vec::new();
        off = 0;
        for a in 0..n {
            for b in a + 1..n {
                sigma_offset.push(((a, b), off));
                let mut s = dims.clone();
                s[a] += 1;
                s[b] += 1;
                off += shape_len(&s);
            }
        }
        let n_sigmas = off;
        let mut c = CubicalComplexND {
            dims,
            face_offset,
            sigma_offset,
            n_faces,
            n_sigmas,
            face_interior: vec![],
            face_atoms: vec![],
            sigma_interior: vec![],
            rlinks: vec![],
            wedges: vec![],
            by_l1: vec![],
            by_r1: vec![],
            by_r2: vec![],
            by_sigma: vec![],
        };
        c.build_tables();
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn n_atoms(&self) -> usize {
        shape_len(&self.dims)
    }

    pub fn n_faces(&self) -> usize {
        self.n_faces
    }

    pub fn n_sigmas(&self) -> usize {
        self.n_sigmas
    }

    pub fn n_links(&self) -> usize {
        self.n_atoms() * 2 * self.n()
    }

    pub fn n_rlinks(&self) -> usize {
        self.rlinks.len()
    }

    pub fn atom_index(&self, pos: &[usize]) -> usize {
        encode(&self.dims, pos)
    }

    pub fn atom_pos(&self, atom: usize) -> Vec<usize> {
        decode(&self.dims, atom)
    }

    fn face_shape(&self, axis: usize) -> Vec<usize> {
        let mut s = self.dims.clone();
        s[axis] += 1;
        s
    }

    /// Face with normal `axis` at grid position `pos` (`pos[axis]` runs to `dims[axis]`).
    pub fn face_id(&self, axis: usize, pos: &[usize]) -> usize {
        self.face_offset[axis] + encode(&self.face_shape(axis), pos)
    }

    /// Axis and grid position of face `f`.
    pub fn face_parts(&self, f: usize) -> (usize, Vec<usize>) {
        let axis = (0..self.n()).rev().find(|&a| self.face_offset[a] <= f).unwrap();
        (axis, decode(&self.face_shape(axis), f - self.face_offset[axis]))
    }

    fn sigma_id(&self, a: usize, b: usize, pos: &[usize]) -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let off = self.sigma_offset.iter().find(|(p, _)| *p == (a, b)).unwrap().1;
        let mut s = self.dims.clone();
        s[a] += 1;
        s[b] += 1;
        off + encode(&s, pos)
    }

    /// Face id of `atom`'s local face `lf`.
    pub fn atom_face(&self, atom: usize, lf: usize) -> usize {
        let (axis, sign) = local_face_parts(lf);
        let mut pos = self.atom_pos(atom);
        pos[axis] += (sign == Sign::Plus) as usize;
        self.face_id(axis, &pos)
    }

    /// Link from `Cν` to the centre of local face `lf`.
    pub fn link(&self, atom: usize, lf: usize) -> usize {
        atom * 2 * self.n() + lf
    }

    pub fn link_parts(&self, l: usize) -> (usize, usize) {
        (l / (2 * self.n()), l % (2 * self.n()))
    }

    pub fn face_is_interior(&self, f: usize) -> bool {
        self.face_interior[f]
    }

    /// Atoms containing face `f` (one or two), lower atom first.
    pub fn face_atoms(&self, f: usize) -> &[usize] {
        &self.face_atoms[f]
    }

    pub fn sigma_is_interior(&self, s: usize) -> bool {
        self.sigma_interior[s]
    }

    pub fn rlink(&self, r: usize) -> RLink {
        self.rlinks[r]
    }

    /// Links in face `f` from `Cτ` to the centres of its codimension-2 faces.
    pub fn face_rlinks(&self, f: usize) -> std::ops::Range<usize> {
        let m = 2 * (self.n() - 1);
        f * m..(f + 1) * m
    }

    /// Link in face `f` heading along `other_axis` towards `sign`.
    pub fn rlink_in_face(&self, f: usize, other_axis: usize, sign: Sign) -> usize {
        let (axis, _) = self.face_parts(f);
        let slot = if other_axis < axis { other_axis } else { other_axis - 1 };
        f * 2 * (self.n() - 1) + 2 * slot + (sign == Sign::Plus) as usize
    }

    fn build_tables(&mut self) {
        let n = self.n();
        self.face_interior = vec![false; self.n_faces];
        self.face_atoms = vec![Vec::new(); self.n_faces];
        for atom in 0..self.n_atoms() {
            for lf in 0..2 * n {
                let f = self.atom_face(atom, lf);
                self.face_atoms[f].push(atom);
            }
        }
        for f in 0..self.n_faces {
            self.face_atoms[f].sort_unstable();
            self.face_interior[f] = self.face_atoms[f].len() == 2;
        }
        self.sigma_interior = vec![false; self.n_sigmas];
        for &((a, b), off) in &self.sigma_offset.clone() {
            let mut s = self.dims.clone();
            s[a] += 1;
            s[b] += 1;
            for id in 0..shape_len(&s) {
                let pos = decode(&s, id);
                self.sigma_interior[off + id] =
                    pos[a] > 0 && pos[a] < self.dims[a] && pos[b] > 0 && pos[b] < self.dims[b];
            }
        }
        self.rlinks = Vec::with_capacity(self.n_faces * 2 * (n - 1));
        for f in 0..self.n_faces {
            let (axis, pos) = self.face_parts(f);
            for b in (0..n).filter(|&b| b != axis) {
                for sign in [Sign::Minus, Sign::Plus] {
                    let mut p = pos.clone();
                    p[b] += (sign == Sign::Plus) as usize;
                    let sigma = self.sigma_id(axis, b, &p);
                    self.rlinks.push(RLink { face: f, sigma });
                }
            }
        }
        self.wedges.clear();
        for atom in 0..self.n_atoms() {
            let base = self.wedges.len();
            let mut index = std::collections::HashMap::new();
            for lf1 in 0..2 * n {
                for lf2 in 0..2 * n {
                    let (a1, s1) = local_face_parts(lf1);
                    let (a2, s2) = local_face_parts(lf2);
                    if a1 == a2 {
                        continue;
                    }
                    let tau1 = self.atom_face(atom, lf1);
                    let tau2 = self.atom_face(atom, lf2);
                    let r1 = self.rlink_in_face(tau1, a2, s2);
                    let r2 = self.rlink_in_face(tau2, a1, s1);
                    let sigma = self.rlinks[r1].sigma;
                    debug_assert_eq!(sigma, self.rlinks[r2].sigma);
                    index.insert((lf1, lf2), self.wedges.len());
                    self.wedges.push(Wedge {
                        atom,
                        l1: self.link(atom, lf1),
                        l2: self.link(atom, lf2),
                        r1,
                        r2,
                        tau1,
                        tau2,
                        sigma,
                        canonical: lf1 < lf2,
                        reverse: usize::MAX,
                    });
                }
            }
            for w in base..self.wedges.len() {
                let (lf1, lf2) = (self.wedges[w].l1 % (2 * n), self.wedges[w].l2 % (2 * n));
                self.wedges[w].reverse = index[&(lf2, lf1)];
            }
        }
        self.by_l1 = vec![Vec::new(); self.n_links()];
        self.by_r1 = vec![Vec::new(); self.rlinks.len()];
        self.by_r2 = vec![Vec::new(); self.rlinks.len()];
        self.by_sigma = vec![Vec::new(); self.n_sigmas];
        for (id, w) in self.wedges.iter().enumerate() {
            self.by_l1[w.l1].push(id);
            self.by_r1[w.r1].push(id);
            self.by_r2[w.r2].push(id);
            if w.canonical {
                self.by_sigma[w.sigma].push(id);
            }
        }
    }

    /// All oriented wedges (both orientations of every geometric wedge).
    pub fn wedges(&self) -> &[Wedge] {
        &self.wedges
    }

    pub fn wedge(&self, s: usize) -> &Wedge {
        &self.wedges[s]
    }

    pub fn canonical_wedges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.wedges.len()).filter(|&s| self.wedges[s].canonical)
    }

    pub fn atom_wedges(&self, atom: usize) -> std::ops::Range<usize> {
        let per = 4 * self.n() * (self.n() - 1);
        atom * per..(atom + 1) * per
    }

    /// Oriented wedges whose `∂s` traverses `l` forward (`l = l₁`).
    pub fn wedges_on_link(&self, l: usize) -> &[usize] {
        &self.by_l1[l]
    }

    /// Oriented wedges with `r = r₁`, one per atom containing `r`.
    pub fn wedges_with_r1(&self, r: usize) -> &[usize] {
        &self.by_r1[r]
    }

    pub fn wedges_with_r2(&self, r: usize) -> &[usize] {
        &self.by_r2[r]
    }

    /// Canonical wedges touching `σ`, one per atom containing `σ`.
    pub fn sigma_wedges(&self, sigma: usize) -> &[usize] {
        &self.by_sigma[sigma]
    }

    /// For an interior `σ`, the four wedges around it ordered so that
    /// `s_{i+1}.r₂ = s_i.r₁`; the product `ĝ_{s4}ĝ_{s3}ĝ_{s2}ĝ_{s1}` then cancels
    /// every `k` of the links entering `Cσ`.
    pub fn sigma_cycle(&self, sigma: usize) -> Option<Vec<usize>> {
        if !self.sigma_interior[sigma] {
            return None;
        }
        let start = self.by_sigma[sigma][0];
        let mut cycle = vec![start];
        let mut cur = start;
        for _ in 0..3 {
            let r = self.wedges[cur].r1;
            let next = *self.by_r2[r].iter().find(|&&s| self.wedges[s].atom != self.wedges[cur].atom)?;
            cycle.push(next);
            cur = next;
        }
        let r = self.wedges[cur].r1;
        (self.wedges[start].r2 == r).then_some(cycle)
    }

    pub fn interior_faces(&self) -> Vec<usize> {
        (0..self.n_faces).filter(|&f| self.face_interior[f]).collect()
    }

    pub fn boundary_faces(&self) -> Vec<usize> {
        (0..self.n_faces).filter(|&f| !self.face_interior[f]).collect()
    }

    pub fn interior_rlinks(&self) -> Vec<usize> {
        (0..self.rlinks.len()).filter(|&r| self.face_interior[self.rlinks[r].face]).collect()
    }

    pub fn boundary_rlinks(&self) -> Vec<usize> {
        (0..self.rlinks.len()).filter(|&r| !self.face_interior[self.rlinks[r].face]).collect()
    }

    pub fn interior_sigmas(&self) -> Vec<usize> {
        (0..self.n_sigmas).filter(|&s| self.sigma_interior[s]).collect()
    }

    pub fn spec(&self) -> ComplexSpec {
        ComplexSpec::Cubical { dims: self.dims.clone() }
    }
}

/// Versioned JSON description of a complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComplexSpec {
    Time { n_atoms: usize, lapse: f64 },
    Cartesian2D { n0: usize, n1: usize, h: f64, k: f64, #[serde(default)] boundary: BoundarySpec },
    Cubical { dims: Vec<usize> },
}
