//! OTB-style sequence directories:
//!
//! ```text
//! DIR/img/00000001.png ...      grayscale or colour PNG frames
//! DIR/groundtruth_rect.txt      one `x,y,w,h` line per frame (top-left)
//! DIR/occlusion.txt             optional, one 0/1 per line
//! DIR/camera.txt                optional, `rotation,scale,tx,ty` per frame
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{BoundingBox, Point2, SimilarityTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub frames: Vec<Frame>,
    pub boxes: Vec<BoundingBox>,
    pub occluded: Vec<bool>,
    /// Camera view per frame (world to frame), synthetic sequences only.
    pub camera: Option<Vec<SimilarityTransform>>,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if self.boxes.len() != n || self.occluded.len() != n || self.camera.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "{n} frames, {} boxes, {} occlusion flags",
                self.boxes.len(),
                self.occluded.len()
            )));
        }
        Ok(())
    }
}

fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("img").join(format!("{:08}.png", index + 1))
}

fn parse_floats(path: &Path, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: line_no, msg };
    let values: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(parse_err(format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageLuma16(g) => g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => other.to_luma8().pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
    };
    Frame::new(w, h, data)
}

pub fn load_sequence(dir: &Path) -> Result<SequenceRecord> {
    let gt_path = dir.join("groundtruth_rect.txt");
    let mut boxes = Vec::new();
    for (line_no, line) in read_lines(&gt_path)? {
        let v = parse_floats(&gt_path, line_no, &line, 4)?;
        let b = BoundingBox::from_top_left(v[0], v[1], v[2], v[3]).map_err(|e| Error::Parse {
            path: gt_path.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        boxes.push(b);
    }

    let mut frames = Vec::new();
    while frame_path(dir, frames.len()).exists() {
        frames.push(load_frame(&frame_path(dir, frames.len()))?);
    }
    if frames.len() != boxes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} images but {} ground-truth lines",
            dir.display(),
            frames.len(),
            boxes.len()
        )));
    }

    let occ_path = dir.join("occlusion.txt");
    let occluded = if occ_path.exists() {
        let mut flags = Vec::new();
        for (line_no, line) in read_lines(&occ_path)? {
            flags.push(match line.as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        path: occ_path.clone(),
                        line: line_no,
                        msg: format!("expected 0 or 1, found `{other}`"),
                    })
                }
            });
        }
        flags
    } else {
        vec![false; frames.len()]
    };

    let cam_path = dir.join("camera.txt");
    let camera = if cam_path.exists() {
        let mut poses = Vec::new();
        for (line_no, line) in read_lines(&cam_path)? {
            let v = parse_floats(&cam_path, line_no, &line, 4)?;
            poses.push(SimilarityTransform { rotation: v[0], scale: v[1], translation: Point2::new(v[2], v[3]) });
        }
        Some(poses)
    } else {
        None
    };

    let record = SequenceRecord { frames, boxes, occluded, camera };
    record.validate()?;
    Ok(record)
}

/// Writes 8-bit PNG frames. Pixel values that are multiples of 1/255 (as
/// produced by the generator) survive a save/load round trip exactly.
pub fn save_sequence(record: &SequenceRecord, dir: &Path) -> Result<()> {
    record.validate()?;
    fs::create_dir_all(dir.join("img"))?;
    for (i, f) in record.frames.iter().enumerate() {
        let mut img = GrayImage::new(f.width() as u32, f.height() as u32);
        for y in 0..f.height() {
            for x in 0..f.width() {
                img.put_pixel(x as u32, y as u32, Luma([(f.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8]));
            }
        }
        img.save(frame_path(dir, i))?;
    }
    let gt: String =
        record.boxes.iter().map(|b| format!("{},{},{},{}\n", b.left(), b.top(), b.w, b.h)).collect();
    fs::write(dir.join("groundtruth_rect.txt"), gt)?;
    let occ: String = record.occluded.iter().map(|&o| if o { "1\n" } else { "0\n" }).collect();
    fs::write(dir.join("occlusion.txt"), occ)?;
    if let Some(cam) = &record.camera {
        let text: String = cam
            .iter()
            .map(|t| format!("{},{},{},{}\n", t.rotation, t.scale, t.translation.x, t.translation.y))
            .collect();
        fs::write(dir.join("camera.txt"), text)?;
    }
    Ok(())
}
