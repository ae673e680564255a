//! im2col / col2im for square kernels. Images are CHW slices.

/// Geometry of a strided convolution mapping `(in_c, in_h, in_w)` to
/// `(out_c, out_h, out_w)`. A transposed convolution reuses the geometry of
/// the convolution it mirrors and runs it backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn new(
        (in_c, in_h, in_w): (usize, usize, usize),
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        if kernel == 0 || stride == 0 || in_h + 2 * padding < kernel || in_w + 2 * padding < kernel {
            return None;
        }
        Some(ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            out_h: (in_h + 2 * padding - kernel) / stride + 1,
            out_w: (in_w + 2 * padding - kernel) / stride + 1,
            kernel,
            stride,
            padding,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Unfolds `image` into a `patch_len x out_pixels` row-major matrix.
    pub fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        debug_assert_eq!(image.len(), self.in_len());
        debug_assert_eq!(cols.len(), self.patch_len() * self.out_pixels());
        let px = self.out_pixels();
        for c in 0..self.in_c {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let dst = &mut cols[row * px..(row + 1) * px];
                    for oy in 0..self.out_h {
                        let sy = self.source(oy, ky, self.in_h);
                        for ox in 0..self.out_w {
                            dst[oy * self.out_w + ox] = match (sy, self.source(ox, kx, self.in_w)) {
                                (Some(y), Some(x)) => image[(c * self.in_h + y) * self.in_w + x],
                                _ => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters patches back, summing overlaps.
    pub fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        debug_assert_eq!(image.len(), self.in_len());
        image.iter_mut().for_each(|v| *v = 0.0);
        let px = self.out_pixels();
        for c in 0..self.in_c {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let src = &cols[row * px..(row + 1) * px];
                    for oy in 0..self.out_h {
                        let Some(y) = self.source(oy, ky, self.in_h) else { continue };
                        for ox in 0..self.out_w {
                            if let Some(x) = self.source(ox, kx, self.in_w) {
                                image[(c * self.in_h + y) * self.in_w + x] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn output_size_for_stride_two() {
        let g = ConvGeom::new((1, 28, 28), 32, 3, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (14, 14));
        let g = ConvGeom::new((1, 7, 7), 8, 3, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (4, 4));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom::new((2, 5, 4), 3, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..g.in_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.patch_len() * g.out_pixels()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        g.im2col(&x, &mut cols);
        let mut img = vec![0.0; x.len()];
        g.col2im(&y, &mut img);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&img).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
