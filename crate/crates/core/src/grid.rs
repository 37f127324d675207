use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major 2-D raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Floating-point image (depth, albedo, log-variance, ...).
pub type Map = Grid<f64>;

/// Per-pixel validity. `true` marks a pixel that takes part in a reduction.
pub type ValidMask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: alloc::vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(alloc::format!(
                "{} values cannot fill a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    /// Errors unless `other` has the same width and height.
    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dims(), actual: other.dims() })
        }
    }
}

impl<T: Clone> Grid<T> {
    /// Stacks grids of equal width on top of each other.
    pub fn vstack(parts: &[Grid<T>]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::invalid("nothing to stack"));
        };
        let width = first.width;
        let mut data = Vec::new();
        let mut height = 0;
        for part in parts {
            if part.width != width {
                return Err(Error::DimensionMismatch { expected: (width, part.height), actual: part.dims() });
            }
            data.extend_from_slice(&part.data);
            height += part.height;
        }
        Ok(Self { width, height, data })
    }
}

impl ValidMask {
    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Pixel-wise AND.
    pub fn and(&self, other: &ValidMask) -> Result<ValidMask> {
        self.ensure_same_dims(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }
}

impl Map {
    /// Mask of finite pixels; NaN marks an invalid pixel throughout the toolkit.
    pub fn finite_mask(&self) -> ValidMask {
        self.map(|v| v.is_finite())
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.data.iter().copied().filter(|v| v.is_finite());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Grid::from_vec(2, 2, alloc::vec![1.0; 3]).is_err());
    }

    #[test]
    fn vstack_concatenates_rows() {
        let a = Grid::filled(3, 2, 1u8);
        let b = Grid::filled(3, 1, 2u8);
        let s = Grid::vstack(&[a, b]).unwrap();
        assert_eq!(s.dims(), (3, 3));
        assert_eq!(*s.get(1, 2), 2);
    }
}
