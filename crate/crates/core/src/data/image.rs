use super::ppm::RawImage;
use crate::error::Result;
use crate::tensor::Tensor;

/// Side length every image is resized to before entering the network.
pub const IMAGE_SIDE: usize = 32;

/// Identifier recorded in checkpoints for [`normalize`].
pub const NORMALIZATION_ID: &str = "rgb8-centered-unit:(v/255-0.5)/0.5";

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &RawImage, out_w: usize, out_h: usize) -> Result<RawImage> {
    if img.width == out_w && img.height == out_h {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / out_w as f64;
    let sy = img.height as f64 / out_h as f64;
    let axis = |dst: usize, scale: f64, len: usize| {
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = vec![0u8; 3 * out_w * out_h];
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, img.height);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(x, sx, img.width);
            let (p00, p01) = (img.pixel(x0, y0), img.pixel(x1, y0));
            let (p10, p11) = (img.pixel(x0, y1), img.pixel(x1, y1));
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[3 * (y * out_w + x) + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RawImage::new(out_w, out_h, out)
}

/// Maps each byte `v` to `(v/255 - 0.5)/0.5` in `[-1, 1]`, as planes R, G, B.
pub fn normalize(img: &RawImage) -> Result<Tensor<f32>> {
    let plane = img.width * img.height;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = normalize_byte(px[c]);
        }
    }
    Tensor::from_vec(&[3, img.height, img.width], data)
}

#[inline]
pub fn normalize_byte(v: u8) -> f32 {
    (v as f32 / 255.0 - 0.5) / 0.5
}

/// Decoded image to network input: resize to 32x32, then normalize.
pub fn preprocess(img: &RawImage) -> Result<Tensor<f32>> {
    normalize(&resize_bilinear(img, IMAGE_SIDE, IMAGE_SIDE)?)
}
