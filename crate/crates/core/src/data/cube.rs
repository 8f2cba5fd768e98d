use super::DataError;

/// A `rows × cols × bands` reflectance raster stored band-sequential.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    rows: usize,
    cols: usize,
    bands: usize,
    values: Vec<f64>,
}

impl HsiCube {
    /// `values` must be in band-sequential order: band, then row, then col.
    pub fn new(rows: usize, cols: usize, bands: usize, values: Vec<f64>) -> Result<Self, DataError> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(DataError::Dimensions(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        if values.len() != rows * cols * bands {
            return Err(DataError::Dimensions(format!(
                "{rows}x{cols}x{bands} cube needs {} values, got {}",
                rows * cols * bands,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(i));
        }
        Ok(HsiCube {
            rows,
            cols,
            bands,
            values,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, DataError> {
        let mut values = Vec::with_capacity(rows * cols * bands);
        for b in 0..bands {
            for r in 0..rows {
                for c in 0..cols {
                    values.push(f(r, c, b));
                }
            }
        }
        HsiCube::new(rows, cols, bands, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Raw band-sequential values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        band * self.rows * self.cols + row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.values[self.index(row, col, band)]
    }

    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.get(row, col, b)).collect()
    }

    pub fn band(&self, band: usize) -> &[f64] {
        let plane = self.rows * self.cols;
        &self.values[band * plane..(band + 1) * plane]
    }

    /// Per-band min-max scaling to `[0, 1]`; constant bands become zero.
    pub fn scale_bands(&self) -> HsiCube {
        let plane = self.rows * self.cols;
        let mut values = Vec::with_capacity(self.values.len());
        for chunk in self.values.chunks(plane) {
            let lo = chunk.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            if range > 0.0 {
                values.extend(chunk.iter().map(|v| (v - lo) / range));
            } else {
                values.extend(std::iter::repeat_n(0.0, plane));
            }
        }
        HsiCube {
            rows: self.rows,
            cols: self.cols,
            bands: self.bands,
            values,
        }
    }
}

/// Class id per pixel, row-major. `0` marks an unlabeled pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    rows: usize,
    cols: usize,
    labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>) -> Result<Self, DataError> {
        if rows == 0 || cols == 0 {
            return Err(DataError::Dimensions(format!(
                "label raster dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if labels.len() != rows * cols {
            return Err(DataError::Dimensions(format!(
                "{rows}x{cols} raster needs {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        Ok(LabelRaster { rows, cols, labels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.cols + col]
    }

    /// Largest class id present; the class count of the task.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Labeled pixel count per class, indexed `0..K` for classes `1..=K`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            if l > 0 {
                counts[l as usize - 1] += 1;
            }
        }
        counts
    }

    pub fn ensure_matches(&self, cube: &HsiCube) -> Result<(), DataError> {
        if self.rows != cube.rows() || self.cols != cube.cols() {
            return Err(DataError::Dimensions(format!(
                "labels are {}x{} but cube is {}x{}",
                self.rows,
                self.cols,
                cube.rows(),
                cube.cols()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bsq_index_arithmetic() {
        let cube = HsiCube::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        // band·(rows·cols) + row·cols + col = 2·4 + 1·2 + 0
        assert_eq!(cube.get(1, 0, 2), 10.0);
        assert_eq!(cube.index(1, 0, 2), 10);
        assert_eq!(cube.spectrum(0, 1), vec![1.0, 5.0, 9.0]);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(HsiCube::new(0, 1, 1, vec![]).is_err());
        assert!(HsiCube::new(1, 1, 2, vec![0.0]).is_err());
        assert!(matches!(
            HsiCube::new(1, 1, 1, vec![f64::NAN]),
            Err(DataError::NonFinite(0))
        ));
    }

    #[test]
    fn scale_bands_endpoints_and_constant() {
        let cube = HsiCube::new(1, 2, 2, vec![2.0, 4.0, 7.0, 7.0]).unwrap();
        let s = cube.scale_bands();
        assert_eq!(s.band(0), &[0.0, 1.0]);
        assert_eq!(s.band(1), &[0.0, 0.0]);
        assert_eq!(s.scale_bands(), s);
    }

    #[test]
    fn class_counts_skip_background() {
        let l = LabelRaster::new(2, 3, vec![0, 1, 1, 3, 0, 3]).unwrap();
        assert_eq!(l.num_classes(), 3);
        assert_eq!(l.class_counts(), vec![2, 0, 2]);
    }
}
