//! Checks against files produced by libjpeg (see fixtures/generate.py).

use cdbin_jpeg::{decode_image, encode_image, partial_decode, write_dump, PixelImage};
use std::path::PathBuf;
use zune_core::colorspace::ColorSpace;
use zune_core::options::DecoderOptions;

const CASES: [&str; 4] = ["gray_q75", "gray_odd_q50", "color_q90", "gray_restart_opt_q60"];

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read_pnm(bytes: &[u8]) -> PixelImage {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    let comps = if fields[0] == "P6" { 3 } else { 1 };
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    PixelImage::new(w, h, comps, bytes[pos + 1..].to_vec()).unwrap()
}

#[test]
fn coefficients_match_libjpeg_dump() {
    for case in CASES {
        let jpg = std::fs::read(fixture(&format!("{case}.jpg"))).unwrap();
        let expected = std::fs::read_to_string(fixture(&format!("{case}.coeffs.txt"))).unwrap();
        let ci = partial_decode(&jpg).unwrap();
        assert_eq!(write_dump(&ci.components), expected, "{case}");
    }
}

#[test]
fn pixels_match_libjpeg_within_one() {
    for case in CASES {
        let jpg = std::fs::read(fixture(&format!("{case}.jpg"))).unwrap();
        let reference = read_pnm(&std::fs::read(fixture(&format!("{case}.ref.pnm"))).unwrap());
        let ours = decode_image(&jpg).unwrap();
        assert_eq!((ours.width(), ours.height(), ours.components()),
                   (reference.width(), reference.height(), reference.components()));
        let worst = ours
            .samples()
            .iter()
            .zip(reference.samples())
            .map(|(a, b)| (*a as i32 - *b as i32).abs())
            .max()
            .unwrap();
        assert!(worst <= 1, "{case}: max pixel difference {worst}");
    }
}

#[test]
fn quant_tables_are_reported() {
    let jpg = std::fs::read(fixture("gray_q75.jpg")).unwrap();
    let ci = partial_decode(&jpg).unwrap();
    let t = cdbin_jpeg::scale_quant_table(cdbin_jpeg::TableKind::Luminance, 75).unwrap();
    assert_eq!(ci.quant_tables[0].as_ref(), Some(&t));
}

#[test]
fn our_streams_decode_with_zune_jpeg() {
    let src = read_pnm(&std::fs::read(fixture("gray_q75.src.pnm")).unwrap());
    let color = read_pnm(&std::fs::read(fixture("color_q90.src.pnm")).unwrap());
    for (img, q) in [(&src, 50), (&src, 90), (&color, 75)] {
        let stream = encode_image(img, q).unwrap();
        let ours = decode_image(stream.as_bytes()).unwrap();
        let space = if img.components() == 3 { ColorSpace::RGB } else { ColorSpace::Luma };
        let opts = DecoderOptions::default().jpeg_set_out_colorspace(space);
        let mut dec = zune_jpeg::JpegDecoder::new_with_options(std::io::Cursor::new(stream.as_bytes()), opts);
        let theirs = dec.decode().unwrap();
        assert_eq!(theirs.len(), ours.raw_len());
        // zune uses an integer IDCT and fixed-point color conversion
        let tol = if img.components() == 3 { 3 } else { 1 };
        let worst = ours.samples().iter().zip(&theirs).map(|(a, b)| (*a as i32 - *b as i32).abs()).max().unwrap();
        assert!(worst <= tol, "q{q}: max diff {worst}");
    }
}
