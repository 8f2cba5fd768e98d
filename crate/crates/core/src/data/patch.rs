use super::{DataError, HsiCube};

/// A `size × size × bands` window, stored row, col, band.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center: (usize, usize),
    pub size: usize,
    pub bands: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn new(size: usize, bands: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if size == 0 || bands == 0 || data.len() != size * size * bands {
            return Err(DataError::Dimensions(format!(
                "patch {size}x{size}x{bands} needs {} values, got {}",
                size * size * bands,
                data.len()
            )));
        }
        Ok(Patch {
            center: (0, 0),
            size,
            bands,
            data,
        })
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.size + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    /// Builds a patch of the same size whose pixel `(i, j)` is this patch's
    /// pixel `src(i, j)`.
    fn remap(&self, src: impl Fn(usize, usize) -> (usize, usize)) -> Patch {
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.size {
            for j in 0..self.size {
                let (si, sj) = src(i, j);
                data.extend_from_slice(self.pixel(si, sj));
            }
        }
        Patch {
            center: self.center,
            size: self.size,
            bands: self.bands,
            data,
        }
    }
}

/// A patch with the class id of its center pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub patch: Patch,
    pub label: u16,
}

/// Mirror index into `0..n` without repeating the edge: `-1 -> 1`, `n -> n-2`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Source pixel for each patch position, row-major, after reflection.
pub fn patch_source_coords(rows: usize, cols: usize, row: usize, col: usize, p: usize) -> Vec<(usize, usize)> {
    let r = (p / 2) as isize;
    let mut out = Vec::with_capacity(p * p);
    for di in -r..=r {
        for dj in -r..=r {
            out.push((
                reflect_index(row as isize + di, rows),
                reflect_index(col as isize + dj, cols),
            ));
        }
    }
    out
}

pub fn extract_patch(cube: &HsiCube, row: usize, col: usize, p: usize) -> Result<Patch, DataError> {
    if p.is_multiple_of(2) {
        return Err(DataError::Config(format!("patch size must be odd, got {p}")));
    }
    if row >= cube.rows() || col >= cube.cols() {
        return Err(DataError::Contract(format!(
            "pixel ({row}, {col}) outside {}x{} cube",
            cube.rows(),
            cube.cols()
        )));
    }
    let bands = cube.bands();
    let mut data = Vec::with_capacity(p * p * bands);
    for (r, c) in patch_source_coords(cube.rows(), cube.cols(), row, col, p) {
        data.extend((0..bands).map(|b| cube.get(r, c, b)));
    }
    Ok(Patch {
        center: (row, col),
        size: p,
        bands,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentOptions {
    /// Use nearest-neighbour 45°/135° rotations. When off, those two slots
    /// hold exact 180°/270° rotations so every variant is a permutation.
    pub diagonal_rotations: bool,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            diagonal_rotations: true,
        }
    }
}

/// Counter-clockwise quarter turn.
pub fn rot90(p: &Patch) -> Patch {
    let n = p.size;
    p.remap(|i, j| (j, n - 1 - i))
}

/// Mirrors left-right.
pub fn flip_horizontal(p: &Patch) -> Patch {
    let n = p.size;
    p.remap(|i, j| (i, n - 1 - j))
}

/// Mirrors top-bottom.
pub fn flip_vertical(p: &Patch) -> Patch {
    let n = p.size;
    p.remap(|i, j| (n - 1 - i, j))
}

/// Counter-clockwise rotation by `degrees` about the patch center, nearest
/// neighbour sampling, reflect fill for sources outside the patch.
pub fn rotate_nearest(p: &Patch, degrees: f64) -> Patch {
    let n = p.size;
    let c = (n as f64 - 1.0) / 2.0;
    let (s, co) = degrees.to_radians().sin_cos();
    p.remap(|i, j| {
        let y = i as f64 - c;
        let x = j as f64 - c;
        let sy = (c + y * co + x * s).round() as isize;
        let sx = (c + x * co - y * s).round() as isize;
        (reflect_index(sy, n), reflect_index(sx, n))
    })
}

/// The original followed by rot45, rot90, rot135, horizontal flip, vertical flip.
pub fn augment(p: &Patch, opts: AugmentOptions) -> Vec<Patch> {
    let quarter = rot90(p);
    let (diag1, diag3) = if opts.diagonal_rotations {
        (rotate_nearest(p, 45.0), rotate_nearest(p, 135.0))
    } else {
        let half = rot90(&quarter);
        let three = rot90(&half);
        (half, three)
    };
    vec![
        p.clone(),
        diag1,
        quarter,
        diag3,
        flip_horizontal(p),
        flip_vertical(p),
    ]
}

pub fn augment_sample(s: &Sample, opts: AugmentOptions) -> Vec<Sample> {
    augment(&s.patch, opts)
        .into_iter()
        .map(|patch| Sample { patch, label: s.label })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Patch {
        Patch::new(n, 1, (0..n * n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
        assert_eq!(reflect_index(-1, 2), 1);
        assert_eq!(reflect_index(-3, 2), 1);
        assert_eq!(reflect_index(7, 1), 0);
    }

    #[test]
    fn p1_patch_is_the_spectrum() {
        let cube = HsiCube::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        let p = extract_patch(&cube, 1, 0, 1).unwrap();
        assert_eq!(p.data, cube.spectrum(1, 0));
    }

    #[test]
    fn corner_patch_reflects() {
        let cube = HsiCube::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = extract_patch(&cube, 0, 0, 3).unwrap();
        assert_eq!(p.pixel(0, 0), &[cube.get(1, 1, 0)]);
        assert_eq!(p.pixel(1, 1), &[cube.get(0, 0, 0)]);
        assert_eq!(p.data, vec![4.0, 3.0, 4.0, 2.0, 1.0, 2.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn even_patch_rejected() {
        let cube = HsiCube::new(2, 2, 1, vec![0.0; 4]).unwrap();
        assert!(matches!(extract_patch(&cube, 0, 0, 2), Err(DataError::Config(_))));
    }

    #[test]
    fn rot90_direction() {
        // [[0,1],[2,3]] turned counter-clockwise is [[1,3],[0,2]]
        assert_eq!(rot90(&grid(2)).data, vec![1.0, 3.0, 0.0, 2.0]);
    }

    #[test]
    fn nearest_rotation_by_90_matches_exact() {
        for n in [1, 3, 5, 7] {
            assert_eq!(rotate_nearest(&grid(n), 90.0), rot90(&grid(n)));
            assert_eq!(rotate_nearest(&grid(n), 0.0), grid(n));
        }
    }

    #[test]
    fn rot45_keeps_center() {
        let g = grid(5);
        let r = rotate_nearest(&g, 45.0);
        assert_eq!(r.pixel(2, 2), g.pixel(2, 2));
    }

    #[test]
    fn constant_patch_augments_to_itself() {
        let p = Patch::new(5, 3, vec![0.7; 75]).unwrap();
        let v = augment(&p, AugmentOptions::default());
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|q| *q == p));
    }
}
