use std::path::Path;

use super::{DisjointSets, Mesh};
use crate::error::{Error, Result};

/// Row-major scalar image with uniform pixel spacing.
///
/// Row 0 is the top row of the image. Pixel `(col, row)` maps to the point
/// `(col * spacing, (height - 1 - row) * spacing)`, so `y` grows upward.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    width: usize,
    height: usize,
    intensities: Vec<f64>,
    pixel_spacing: f64,
}

impl GridImage {
    pub fn new(width: usize, height: usize, intensities: Vec<f64>) -> Result<Self> {
        Self::with_spacing(width, height, intensities, 1.0)
    }

    pub fn with_spacing(
        width: usize,
        height: usize,
        intensities: Vec<f64>,
        pixel_spacing: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if intensities.len() != width * height {
            return Err(Error::invalid(format!(
                "image has {} intensities, expected {width}x{height}",
                intensities.len()
            )));
        }
        if let Some(v) = intensities.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!(
                "image intensities must be finite and non-negative, found {v}"
            )));
        }
        if !(pixel_spacing.is_finite() && pixel_spacing > 0.0) {
            return Err(Error::invalid(format!(
                "pixel spacing must be positive, got {pixel_spacing}"
            )));
        }
        Ok(GridImage {
            width,
            height,
            intensities,
            pixel_spacing,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.intensities[row * self.width + col]
    }

    /// Same image with a different pixel spacing.
    pub fn respaced(self, pixel_spacing: f64) -> Result<Self> {
        Self::with_spacing(self.width, self.height, self.intensities, pixel_spacing)
    }

    /// Same grid with every intensity replaced by `f(value)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_spacing(
            self.width,
            self.height,
            self.intensities.iter().map(|&v| f(v)).collect(),
            self.pixel_spacing,
        )
    }

    /// Reads a PGM file (`.pgm`) or a comma-separated intensity grid (anything else).
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm {
            Self::read_pgm(path)
        } else {
            Self::read_csv(path)
        }
    }

    /// Reads a CSV grid: one image row per line, no header.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(file);
        let mut width = None;
        let mut values = Vec::new();
        let mut height = 0;
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let before = values.len();
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(format!("row {}: bad number {field:?}", row + 1)))?;
                values.push(v);
            }
            let w = values.len() - before;
            match width {
                None => width = Some(w),
                Some(expected) if expected != w => {
                    return Err(parse_err(format!(
                        "row {} has {w} values, expected {expected}",
                        row + 1
                    )))
                }
                _ => {}
            }
            height += 1;
        }
        let width = width.ok_or_else(|| parse_err("no data rows".into()))?;
        Self::new(width, height, values)
    }

    /// Reads an ASCII (`P2`) or binary (`P5`) PGM, dividing every sample by the
    /// header max value so intensities land in `[0, 1]`.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse_pgm(&bytes).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos).ok_or("missing PGM magic")?;
        let binary = match magic {
            b"P2" => false,
            b"P5" => true,
            other => return Err(format!("unsupported magic {:?}", String::from_utf8_lossy(other))),
        };
        let mut header = [0usize; 3];
        for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
            let tok = next_token(bytes, &mut pos).ok_or(format!("missing {name}"))?;
            *slot = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or(format!("bad {name}"))?;
        }
        let [width, height, maxval] = header;
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        let n = width * height;
        let scale = maxval as f64;
        let mut values = Vec::with_capacity(n);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let bps = if maxval < 256 { 1 } else { 2 };
            let raster = bytes
                .get(pos..pos + n * bps)
                .ok_or("truncated PGM raster")?;
            for sample in raster.chunks_exact(bps) {
                let v = if bps == 1 {
                    sample[0] as usize
                } else {
                    (sample[0] as usize) << 8 | sample[1] as usize
                };
                values.push(v as f64 / scale);
            }
        } else {
            for i in 0..n {
                let tok = next_token(bytes, &mut pos).ok_or(format!("missing sample {i}"))?;
                let v: usize = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse().ok())
                    .ok_or(format!("bad sample {i}"))?;
                values.push(v as f64 / scale);
            }
        }
        Self::new(width, height, values).map_err(|e| e.to_string())
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

/// A triangulated grid together with the pixel each mesh node came from.
#[derive(Debug, Clone)]
pub struct GridMesh {
    pub mesh: Mesh,
    /// Row-major pixel index of every mesh node.
    pub node_pixels: Vec<usize>,
}

/// Triangulates the cells of `image` whose four corners all exceed `threshold`.
pub fn triangulate_grid(image: &GridImage, threshold: f64) -> Result<Mesh> {
    triangulate_grid_mapped(image, threshold).map(|g| g.mesh)
}

/// Like [`triangulate_grid`], also returning the node-to-pixel map.
///
/// Each retained cell is split along its lower-left to upper-right diagonal.
/// Only the largest connected group of cells (cells touching at a corner are
/// connected) is kept; ties go to the group whose first cell comes first in
/// row-major order.
pub fn triangulate_grid_mapped(image: &GridImage, threshold: f64) -> Result<GridMesh> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {threshold}")));
    }
    let (w, h) = (image.width, image.height);
    let pix = |col: usize, row: usize| row * w + col;

    // cells indexed by their upper-left pixel
    let mut cells = Vec::new();
    if w >= 2 && h >= 2 {
        for row in 0..h - 1 {
            for col in 0..w - 1 {
                let corners = [
                    pix(col, row),
                    pix(col + 1, row),
                    pix(col, row + 1),
                    pix(col + 1, row + 1),
                ];
                if corners.iter().all(|&p| image.intensities[p] > threshold) {
                    cells.push((col, row));
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyMesh(format!(
            "no grid cell has all four corners above threshold {threshold}"
        )));
    }

    let mut dsu = DisjointSets::new(w * h);
    for &(col, row) in &cells {
        let ul = pix(col, row);
        for p in [pix(col + 1, row), pix(col, row + 1), pix(col + 1, row + 1)] {
            dsu.union(ul, p);
        }
    }
    let mut cell_count = vec![0usize; w * h];
    let mut first_seen = vec![usize::MAX; w * h];
    for (k, &(col, row)) in cells.iter().enumerate() {
        let root = dsu.find(pix(col, row));
        cell_count[root] += 1;
        first_seen[root] = first_seen[root].min(k);
    }
    let keep_root = (0..w * h)
        .filter(|&r| cell_count[r] > 0)
        .max_by(|&a, &b| {
            cell_count[a]
                .cmp(&cell_count[b])
                .then(first_seen[b].cmp(&first_seen[a]))
        })
        .expect("at least one cell");
    cells.retain(|&(col, row)| dsu.find(pix(col, row)) == keep_root);

    let mut used = vec![false; w * h];
    for &(col, row) in &cells {
        for p in [
            pix(col, row),
            pix(col + 1, row),
            pix(col, row + 1),
            pix(col + 1, row + 1),
        ] {
            used[p] = true;
        }
    }
    let mut node_of_pixel = vec![usize::MAX; w * h];
    let mut node_pixels = Vec::new();
    let mut coords = Vec::new();
    let s = image.pixel_spacing;
    for row in 0..h {
        for col in 0..w {
            let p = pix(col, row);
            if used[p] {
                node_of_pixel[p] = node_pixels.len();
                node_pixels.push(p);
                coords.push(col as f64 * s);
                coords.push((h - 1 - row) as f64 * s);
            }
        }
    }

    let mut connectivity = Vec::with_capacity(cells.len() * 6);
    for &(col, row) in &cells {
        let ul = node_of_pixel[pix(col, row)];
        let ur = node_of_pixel[pix(col + 1, row)];
        let ll = node_of_pixel[pix(col, row + 1)];
        let lr = node_of_pixel[pix(col + 1, row + 1)];
        connectivity.extend_from_slice(&[ll, lr, ur, ll, ur, ul]);
    }
    let mesh = Mesh::new(2, coords, connectivity)?;
    Ok(GridMesh { mesh, node_pixels })
}
