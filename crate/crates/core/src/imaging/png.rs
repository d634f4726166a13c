//! 8-bit RGB PNG storage for encoded images.

use std::io::{Cursor, Write};

use super::{Canvas, ImageTensor, ImagingError};

fn png_err(e: impl ToString) -> ImagingError {
    ImagingError::Png(e.to_string())
}

pub fn write_rgb8<W: Write>(writer: W, width: usize, height: usize, rgb: &[u8]) -> Result<(), ImagingError> {
    let mut enc = png::Encoder::new(writer, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(rgb).map_err(png_err)?;
    w.finish().map_err(png_err)
}

pub fn encode_image(img: &ImageTensor) -> Result<Vec<u8>, ImagingError> {
    let mut buf = Vec::new();
    write_rgb8(&mut buf, img.width(), img.height(), &img.to_rgb8())?;
    Ok(buf)
}

pub fn encode_canvas(canvas: &Canvas) -> Result<Vec<u8>, ImagingError> {
    let mut buf = Vec::new();
    write_rgb8(&mut buf, canvas.width(), canvas.height(), &canvas.to_rgb8())?;
    Ok(buf)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor, ImagingError> {
    let reader = png::Decoder::new(Cursor::new(bytes));
    let mut reader = reader.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(format!("expected 8-bit RGB, got {:?} {:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    ImageTensor::from_rgb8(info.height as usize, info.width as usize, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_after_quantization() {
        let data: Vec<f32> = (0..7 * 5 * 3).map(|i| (i % 17) as f32 / 16.0).collect();
        let img = ImageTensor::new(5, 7, data).unwrap().quantized();
        let bytes = encode_image(&img).unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }
}
