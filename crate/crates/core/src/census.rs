//! Census-transform data costs: per-pixel comparison bitstrings matched by
//! Hamming distance, for stereo (1-D disparity) and flow (2-D displacement)
//! volumes, plus image-driven edge weights for the regularizer.

use crate::energy::{CostVolume, FlowCostVolume2D, GridGraph};
use crate::error::{Error, Result};
use crate::io::GrayImage;

/// Per-pixel census codes: bit `k` is set iff the `k`-th window neighbor
/// (raster order, center excluded) is strictly darker than the center.
/// Border neighbors replicate the edge pixel.
#[derive(Debug, Clone)]
pub struct CensusField {
    pub width: usize,
    pub height: usize,
    pub window: usize,
    pub codes: Vec<u128>,
}

impl CensusField {
    /// Number of comparison bits per pixel.
    pub fn bits(&self) -> usize {
        self.window * self.window - 1
    }

    #[inline]
    pub fn code(&self, x: usize, y: usize) -> u128 {
        self.codes[y * self.width + x]
    }
}

/// Census transform with an odd square window.
pub fn census_transform(image: &GrayImage, window: usize) -> Result<CensusField> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "census window must be odd and >= 3, got {window}"
        )));
    }
    if window * window - 1 > 128 {
        return Err(Error::Argument(format!(
            "census window {window} needs more than 128 bits"
        )));
    }
    if window > image.width || window > image.height {
        return Err(Error::Argument(format!(
            "census window {window} larger than {}x{} image",
            image.width, image.height
        )));
    }
    let r = (window / 2) as i64;
    let mut field = CensusField {
        width: image.width,
        height: image.height,
        window,
        codes: vec![0; image.width * image.height],
    };
    for y in 0..image.height as i64 {
        for x in 0..image.width as i64 {
            let center = image.get(x as usize, y as usize);
            let mut code = 0u128;
            let mut bit = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if image.get_clamped(x + dx, y + dy) < center {
                        code |= 1u128 << bit;
                    }
                    bit += 1;
                }
            }
            field.codes[(y * image.width as i64 + x) as usize] = code;
        }
    }
    Ok(field)
}

/// Uninformative cost assigned to samples that fall outside the frame.
fn out_of_frame_cost(bits: usize) -> f32 {
    bits as f32 / 2.0
}

/// Stereo cost volume: `cost(i, k)` is the Hamming distance between the
/// left code at `i` and the right code at `i` shifted left by the
/// disparity `d_k` (rounded to the nearest pixel).  Out-of-frame samples
/// get the uninformative half-bit cost.
pub fn hamming_cost_volume(
    left: &CensusField,
    right: &CensusField,
    disparities: &[f64],
) -> Result<CostVolume> {
    if left.width != right.width || left.height != right.height {
        return Err(Error::Dimension(format!(
            "census fields {}x{} vs {}x{}",
            left.width, left.height, right.width, right.height
        )));
    }
    let k = disparities.len();
    let volume = CostVolume::new(left.width, left.height, k)?;
    let mut volume = volume.with_label_values(disparities.to_vec())?;
    let bits = left.bits();
    let far = out_of_frame_cost(bits);
    for y in 0..left.height {
        for x in 0..left.width {
            let pixel = y * left.width + x;
            let cl = left.code(x, y);
            for (label, &d) in disparities.iter().enumerate() {
                let xs = x as i64 - d.round() as i64;
                volume.costs[pixel * k + label] = if xs < 0 || xs >= left.width as i64 {
                    far
                } else {
                    (cl ^ right.code(xs as usize, y)).count_ones() as f32
                };
            }
        }
    }
    Ok(volume)
}

/// Flow cost table: `D_i(a, b)` is the Hamming distance between the first
/// image's code at `i` and the second image's code at `i + (d_a, d_b)`.
pub fn flow_cost_volume(
    first: &CensusField,
    second: &CensusField,
    range1: &[f64],
    range2: &[f64],
) -> Result<FlowCostVolume2D> {
    if first.width != second.width || first.height != second.height {
        return Err(Error::Dimension(format!(
            "census fields {}x{} vs {}x{}",
            first.width, first.height, second.width, second.height
        )));
    }
    if range1.is_empty() || range2.is_empty() {
        return Err(Error::Argument("flow label ranges must be nonempty".into()));
    }
    let (k1, k2) = (range1.len(), range2.len());
    let mut vol = FlowCostVolume2D::new(first.width, first.height, k1, k2)?;
    vol.label_values1 = range1.to_vec();
    vol.label_values2 = range2.to_vec();
    let bits = first.bits();
    let far = out_of_frame_cost(bits);
    for y in 0..first.height {
        for x in 0..first.width {
            let pixel = y * first.width + x;
            let c1 = first.code(x, y);
            for (a, &d1) in range1.iter().enumerate() {
                let xs = x as i64 + d1.round() as i64;
                for (b, &d2) in range2.iter().enumerate() {
                    let ys = y as i64 + d2.round() as i64;
                    let cost = if xs < 0
                        || xs >= first.width as i64
                        || ys < 0
                        || ys >= first.height as i64
                    {
                        far
                    } else {
                        (c1 ^ second.code(xs as usize, ys as usize)).count_ones() as f32
                    };
                    *vol.cost_mut(pixel, a, b) = cost;
                }
            }
        }
    }
    Ok(vol)
}

/// Image-driven edge weights `w_ij = max(w_min, exp(-a * |I_i - I_j|^b))`
/// in the edge order of the graph, lowering the smoothness penalty across
/// intensity edges.
pub fn edge_weights(
    image: &GrayImage,
    graph: &GridGraph,
    a: f64,
    b: f64,
    w_min: f64,
) -> Vec<f64> {
    graph
        .edges
        .iter()
        .map(|&(i, j)| {
            let diff = (image.pixels[i] as f64 - image.pixels[j] as f64).abs();
            (-a * diff.powf(b)).exp().max(w_min)
        })
        .collect()
}

/// Compute and install edge weights on the graph.
pub fn apply_edge_weights(graph: &mut GridGraph, image: &GrayImage, a: f64, b: f64, w_min: f64) {
    graph.edge_weights = edge_weights(image, graph, a, b, w_min);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image_from(vals: &[&[f32]]) -> GrayImage {
        let height = vals.len();
        let width = vals[0].len();
        let mut img = GrayImage::new(width, height);
        for (y, row) in vals.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                img.set(x, y, v);
            }
        }
        img
    }

    #[test]
    fn constant_image_zero_codes() {
        let img = GrayImage {
            width: 6,
            height: 5,
            pixels: vec![0.5; 30],
        };
        let field = census_transform(&img, 3).unwrap();
        assert!(field.codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn dark_center_sets_one_facing_bit() {
        // single dark pixel in a bright image: each neighbor's code has
        // exactly one set bit, the one comparing against the dark pixel
        let mut img = GrayImage {
            width: 5,
            height: 5,
            pixels: vec![1.0; 25],
        };
        img.set(2, 2, 0.0);
        let field = census_transform(&img, 3).unwrap();
        for y in 0..5usize {
            for x in 0..5usize {
                let expected = if x == 2 && y == 2 {
                    0 // nothing is darker than the dark pixel itself
                } else if x.abs_diff(2) <= 1 && y.abs_diff(2) <= 1 {
                    1 // one window neighbor (the dark pixel) is darker
                } else {
                    0
                };
                assert_eq!(
                    field.code(x, y).count_ones(),
                    expected,
                    "pixel ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn horizontal_ramp_sets_left_bits() {
        let mut img = GrayImage::new(7, 7);
        for y in 0..7 {
            for x in 0..7 {
                img.set(x, y, x as f32 / 7.0);
            }
        }
        let field = census_transform(&img, 3).unwrap();
        // interior pixels: exactly the three left-column neighbors are darker
        for y in 1..6usize {
            for x in 1..6usize {
                let code = field.code(x, y);
                assert_eq!(code.count_ones(), 3, "pixel ({x},{y})");
                // raster order of the 3x3 window without center:
                // bits 0..8 = NW N NE W E SW S SE
                assert_eq!(code & 0b1, 0b1, "NW darker");
                assert_eq!((code >> 3) & 0b1, 0b1, "W darker");
                assert_eq!((code >> 5) & 0b1, 0b1, "SW darker");
            }
        }
    }

    #[test]
    fn window_validation() {
        let img = GrayImage::new(4, 4);
        assert!(census_transform(&img, 2).is_err());
        assert!(census_transform(&img, 1).is_err());
        assert!(census_transform(&img, 5).is_err(), "window exceeds image");
        assert!(census_transform(&img, 3).is_ok());
    }

    #[test]
    fn census_invariant_to_monotone_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut img = GrayImage::new(8, 6);
        for p in img.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        let base = census_transform(&img, 5).unwrap();
        // strictly monotone maps preserve all strict comparisons
        for map in [|v: f32| v * 0.3 + 0.1, |v: f32| v * v * 0.9 + v * 0.05] {
            let mut mapped = img.clone();
            for p in mapped.pixels.iter_mut() {
                *p = map(*p);
            }
            let field = census_transform(&mapped, 5).unwrap();
            assert_eq!(base.codes, field.codes);
        }
    }

    #[test]
    fn identical_images_zero_cost_at_zero_disparity() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut img = GrayImage::new(10, 6);
        for p in img.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        let f = census_transform(&img, 3).unwrap();
        let vol = hamming_cost_volume(&f, &f, &[0.0, 1.0, 2.0]).unwrap();
        for pixel in 0..60 {
            assert_eq!(vol.cost(pixel, 0), 0.0);
        }
    }

    #[test]
    fn shifted_pair_recovers_disparity() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let w = 24;
        let h = 8;
        // right image is the left shifted left by 3: right(x) = left(x + 3)
        let mut right = GrayImage::new(w, h);
        for p in right.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        let mut left = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                left.set(x, y, right.get_clamped(x as i64 - 3, y as i64));
            }
        }
        let cl = census_transform(&left, 3).unwrap();
        let cr = census_transform(&right, 3).unwrap();
        let disp: Vec<f64> = (0..6).map(|d| d as f64).collect();
        let vol = hamming_cost_volume(&cl, &cr, &disp).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for y in 2..h - 2 {
            for x in 6..w - 2 {
                let pixel = y * w + x;
                let best = (0..6)
                    .min_by(|&a, &b| {
                        vol.cost(pixel, a)
                            .partial_cmp(&vol.cost(pixel, b))
                            .unwrap()
                    })
                    .unwrap();
                total += 1;
                if best == 3 {
                    hits += 1;
                }
                assert_eq!(vol.cost(pixel, 3), 0.0, "exact match at d=3");
            }
        }
        assert!(hits * 10 >= total * 9, "argmin recovers the shift");
    }

    #[test]
    fn costs_within_popcount_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let mut a = GrayImage::new(9, 7);
        let mut b = GrayImage::new(9, 7);
        for p in a.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        for p in b.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        let ca = census_transform(&a, 5).unwrap();
        let cb = census_transform(&b, 5).unwrap();
        let vol = hamming_cost_volume(&ca, &cb, &[-2.0, 0.0, 2.0]).unwrap();
        let max = (5 * 5 - 1) as f32;
        assert!(vol.costs.iter().all(|&c| (0.0..=max).contains(&c)));
    }

    #[test]
    fn hamming_symmetric_under_swap_and_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let w = 16;
        let h = 6;
        let mut a = GrayImage::new(w, h);
        let mut b = GrayImage::new(w, h);
        for p in a.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        for p in b.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        let ca = census_transform(&a, 3).unwrap();
        let cb = census_transform(&b, 3).unwrap();
        let d = 2.0;
        let ab = hamming_cost_volume(&ca, &cb, &[d]).unwrap();
        let ba = hamming_cost_volume(&cb, &ca, &[-d]).unwrap();
        for y in 0..h {
            for x in 3..w {
                let i = y * w + x;
                let j = y * w + (x - 2);
                assert_eq!(ab.cost(i, 0), ba.cost(j, 0), "pixels {i} vs {j}");
            }
        }
    }

    #[test]
    fn flow_volume_mirrors_stereo_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let w = 12;
        let h = 10;
        let mut second = GrayImage::new(w, h);
        for p in second.pixels.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        // first image moves by (+2, 0): second(x) = first(x - 2) shifted
        let mut first = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                first.set(x, y, second.get_clamped(x as i64 + 2, y as i64));
            }
        }
        let c1 = census_transform(&first, 3).unwrap();
        let c2 = census_transform(&second, 3).unwrap();
        let r: Vec<f64> = (-3..=3).map(|d| d as f64).collect();
        let vol = flow_cost_volume(&c1, &c2, &r, &r).unwrap();
        // zero-cost at displacement (+2, 0) in the interior
        for y in 2..h - 2 {
            for x in 2..w - 5 {
                let pixel = y * w + x;
                assert_eq!(vol.cost(pixel, 5, 3), 0.0, "(+2,0) at ({x},{y})");
            }
        }
        let max = (3 * 3 - 1) as f32;
        assert!(vol.costs.iter().all(|&c| (0.0..=max).contains(&c)));

        // identical pair: zero displacement is free
        let vol0 = flow_cost_volume(&c2, &c2, &r, &r).unwrap();
        for pixel in 0..w * h {
            assert_eq!(vol0.cost(pixel, 3, 3), 0.0);
        }
    }

    #[test]
    fn edge_weight_behavior() {
        use crate::energy::build_grid_graph;
        // constant image: all weights 1
        let img = GrayImage {
            width: 4,
            height: 3,
            pixels: vec![0.25; 12],
        };
        let graph = build_grid_graph(4, 3).unwrap();
        let w = edge_weights(&img, &graph, 5.0, 1.0, 0.05);
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-12));

        // a = 0 makes the map constant 1 regardless of the image
        let step = image_from(&[
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0],
        ]);
        let w0 = edge_weights(&step, &graph, 0.0, 1.0, 0.05);
        assert!(w0.iter().all(|&x| (x - 1.0).abs() < 1e-12));

        // step edge: weights across the step are smaller than along it
        let w = edge_weights(&step, &graph, 5.0, 1.0, 0.05);
        for (e, &(i, j)) in graph.edges.iter().enumerate() {
            let across = (step.pixels[i] - step.pixels[j]).abs() > 0.5;
            if across {
                assert!(w[e] < 0.05 + 1e-9, "across the step: clamped to w_min");
            } else {
                assert!((w[e] - 1.0).abs() < 1e-12);
            }
        }
    }
}
