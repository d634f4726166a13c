use super::{ImageTensor, CHANNELS};

/// Source taps for one output coordinate under half-pixel-center bilinear
/// sampling.
fn bilinear_taps(out: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((out as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let i0 = s.floor() as usize;
    (i0, (i0 + 1).min(src - 1), s - i0 as f64)
}

/// Bilinear resize of one `h x w` plane (half-pixel centers, edge clamped).
/// Equal sizes give back the input unchanged.
pub fn resize_bilinear_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w);
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let xs: Vec<_> = (0..out_w).map(|x| bilinear_taps(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (r0, r1, ty) = bilinear_taps(y, h, out_h);
        for &(c0, c1, tx) in &xs {
            let top = src[r0 * w + c0] * (1.0 - tx) + src[r0 * w + c1] * tx;
            let bottom = src[r1 * w + c0] * (1.0 - tx) + src[r1 * w + c1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> ImageTensor {
    let planes: Vec<Vec<f64>> = (0..CHANNELS)
        .map(|c| resize_bilinear_plane(&img.plane(c), img.height(), img.width(), out_h, out_w))
        .collect();
    ImageTensor::from_planes(out_h, out_w, [&planes[0], &planes[1], &planes[2]]).expect("resized image is valid")
}

/// Overlap weights of source cells `[i, i + 1)` with the output cell
/// `[o * src / dst, (o + 1) * src / dst)`, normalized to sum to one.
fn area_taps(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let taps: Vec<(usize, f64)> = (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .map(|i| (i, (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(i, w)| (i, w / total)).collect()
        })
        .collect()
}

/// Box-filter (area-averaging) resize used to shrink encoded images to the
/// model input size; enlargement falls back to bilinear.
pub fn resize_area(img: &ImageTensor, out_h: usize, out_w: usize) -> ImageTensor {
    if out_h > img.height() || out_w > img.width() {
        return resize_bilinear(img, out_h, out_w);
    }
    if out_h == img.height() && out_w == img.width() {
        return img.clone();
    }
    let (ys, xs) = (area_taps(img.height(), out_h), area_taps(img.width(), out_w));
    let w = img.width();
    let src = img.data();
    let mut out = Vec::with_capacity(out_h * out_w * CHANNELS);
    for ty in &ys {
        for tx in &xs {
            for c in 0..CHANNELS {
                let mut acc = 0.0f64;
                for &(y, wy) in ty {
                    for &(x, wx) in tx {
                        acc += wy * wx * f64::from(src[(y * w + x) * CHANNELS + c]);
                    }
                }
                out.push(acc.clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageTensor::new(out_h, out_w, out).expect("resized image is valid")
}
