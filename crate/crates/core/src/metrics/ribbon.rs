use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Pixel rows per sequence band.
pub const BAND_HEIGHT: usize = 24;

/// RGB color of each class id.
pub const PALETTE: [[u8; 3]; 16] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [174, 199, 232],
    [255, 187, 120],
    [152, 223, 138],
    [255, 152, 150],
    [197, 176, 213],
    [0, 0, 0],
];

/// Binary PPM with one band per sequence, top to bottom, one pixel column
/// per frame. Band names are written as header comments.
pub fn encode_ribbon(sequences: &[(&str, &[usize])]) -> Result<Vec<u8>> {
    let width = sequences.first().map_or(0, |(_, s)| s.len());
    if width == 0 {
        return Err(Error::Data("ribbon needs at least one nonempty sequence".into()));
    }
    let mut out = b"P6\n".to_vec();
    for (name, seq) in sequences {
        if seq.len() != width {
            return Err(Error::Data(format!(
                "ribbon band {name:?} has {} frames, expected {width}",
                seq.len()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&c| c >= PALETTE.len()) {
            return Err(Error::Data(format!(
                "class {bad} has no ribbon color (palette holds {})",
                PALETTE.len()
            )));
        }
        let name: String = name.chars().filter(|c| !c.is_control()).collect();
        out.extend_from_slice(format!("# {name}\n").as_bytes());
    }
    out.extend_from_slice(format!("{width} {}\n255\n", sequences.len() * BAND_HEIGHT).as_bytes());
    for (_, seq) in sequences {
        let row: Vec<u8> = seq.iter().flat_map(|&c| PALETTE[c]).collect();
        for _ in 0..BAND_HEIGHT {
            out.extend_from_slice(&row);
        }
    }
    Ok(out)
}

pub fn emit_ribbon(sequences: &[(&str, &[usize])], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ribbon(sequences)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}
