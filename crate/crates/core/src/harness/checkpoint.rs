//! Plain-text checkpoints.
//!
//! ```text
//! occtrack-checkpoint 1
//! variant: complete
//! seed: 7
//! ...                       more `key: value` header lines
//! ---
//! traj.encoder.w 32,12,3,3  one line per array: name and shape
//! 0.0123 -0.5 ...           then its values on the next line
//! ```
//!
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bit-exact. Loading rebuilds the networks from the header and checks
//! every array's name and shape against them.

use std::fs;
use std::path::Path;

use super::config::{KeyValues, Switch};
use super::experiment::{TrainedVariant, Variant};
use crate::assess::{AssessConfig, AssessmentNet, CalibrationParams};
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::pipeline::{Models, PipelineConfig, Selection, TrajEvidence};
use crate::tracker::{TemplateSource, TrackerConfig};
use crate::trajnet::{FutureMotion, LocationEncoding, TrajectoryNet, TrajectoryNetConfig};

const MAGIC: &str = "occtrack-checkpoint 1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub trained: TrainedVariant,
    pub seed: u64,
    pub traj_epochs: usize,
    pub assess_epochs: usize,
}

fn on(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn header(c: &Checkpoint) -> String {
    let t = &c.trained;
    let m = &t.models;
    let mut h = vec![
        MAGIC.to_string(),
        format!("variant: {}", t.variant),
        format!("seed: {}", c.seed),
        format!("traj_epochs: {}", c.traj_epochs),
        format!("assess_epochs: {}", c.assess_epochs),
        format!("temperature: {}", m.calibration.temperature),
        format!("tau: {}", m.tau),
        format!("trajectory: {}", on(m.trajectory.is_some())),
    ];
    if let Some(net) = &m.trajectory {
        let n = &net.config;
        h.extend([
            format!("traj.past_len: {}", n.past_len),
            format!("traj.future_len: {}", n.future_len),
            format!("traj.map_rows: {}", n.map_rows),
            format!("traj.map_cols: {}", n.map_cols),
            format!("traj.hidden: {}", n.hidden),
            format!("traj.stream_channels: {}", n.stream_channels),
            format!("traj.kernel: {}", n.kernel),
            format!("traj.use_image: {}", on(n.use_image)),
            format!("traj.use_location: {}", on(n.use_location)),
            format!(
                "traj.location_encoding: {}",
                match n.location_encoding {
                    LocationEncoding::Map => "map",
                    LocationEncoding::Coordinates => "coordinates",
                }
            ),
        ]);
    }
    let a = &m.assessment.config;
    let p = &t.pipeline;
    h.extend([
        format!("assess.history_len: {}", a.history_len),
        format!("assess.hidden: {}", a.hidden),
        format!("assess.kernel: {}", a.kernel),
        format!("assess.use_heatmap: {}", on(a.use_heatmap)),
        format!("pipeline.lazy: {}", on(p.lazy)),
        format!("pipeline.compensate: {}", on(p.compensate)),
        format!(
            "pipeline.future_motion: {}",
            match p.future_motion {
                FutureMotion::Constant => "constant",
                FutureMotion::Linear => "linear",
            }
        ),
        format!(
            "pipeline.traj_evidence: {}",
            match p.traj_evidence {
                TrajEvidence::TrackerHeatmap => "tracker",
                TrajEvidence::Prediction => "prediction",
            }
        ),
        format!(
            "pipeline.selection: {}",
            match p.selection {
                Selection::Assessment => "assessment",
                Selection::HeatmapWeight => "weight",
            }
        ),
        format!("pipeline.rescale_box: {}", on(p.rescale_box)),
        format!(
            "tracker.template_size: {}",
            t.tracker.template_size.map_or("auto".to_string(), |s| s.to_string())
        ),
        format!("tracker.search_factor: {}", t.tracker.search_factor),
        format!(
            "tracker.template_source: {}",
            match t.tracker.template_source {
                TemplateSource::Initial => "initial",
                TemplateSource::Previous => "previous",
            }
        ),
    ]);
    h.join("\n")
}

fn write_arrays(out: &mut String, prefix: &str, net: &impl Params) {
    for (name, shape, values) in net.named_params() {
        let shape: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("{prefix}.{name} {}\n", shape.join(",")));
        let vals: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
}

pub fn to_string(c: &Checkpoint) -> String {
    let mut out = header(c);
    out.push_str("\n---\n");
    if let Some(net) = &c.trained.models.trajectory {
        write_arrays(&mut out, "traj", net);
    }
    write_arrays(&mut out, "assess", &c.trained.models.assessment);
    out
}

pub fn save(c: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, to_string(c))?;
    Ok(())
}

fn choice<'a>(kv: &mut KeyValues, key: &str, options: &[&'a str]) -> Result<Option<&'a str>> {
    match kv.take::<String>(key)? {
        None => Ok(None),
        Some(v) => options
            .iter()
            .find(|o| **o == v)
            .map(|o| Some(*o))
            .ok_or_else(|| Error::Checkpoint(format!("`{key}`: expected one of {options:?}, found `{v}`"))),
    }
}

fn required<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Checkpoint(format!("missing header key `{key}`")))
}

fn fill(prefix: &str, net: &mut impl Params, arrays: &mut Vec<(String, Vec<usize>, Vec<f64>)>) -> Result<()> {
    let expected: Vec<(String, Vec<usize>)> =
        net.named_params().into_iter().map(|(n, s, _)| (format!("{prefix}.{n}"), s)).collect();
    for ((name, shape), dst) in expected.iter().zip(net.params_mut()) {
        let pos = arrays
            .iter()
            .position(|a| &a.0 == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))?;
        let (_, s, v) = arrays.remove(pos);
        if &s != shape || v.len() != dst.len() {
            return Err(Error::Checkpoint(format!("array `{name}` has shape {s:?}, expected {shape:?}")));
        }
        dst.copy_from_slice(&v);
    }
    Ok(())
}

pub fn from_str(text: &str, path: &Path) -> Result<Checkpoint> {
    let (head, body) = text
        .split_once("\n---\n")
        .ok_or_else(|| Error::Checkpoint(format!("{}: no `---` separator", path.display())))?;
    let head = head
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Checkpoint(format!("{}: not an occtrack checkpoint", path.display())))?;
    let mut kv = KeyValues::parse(head, path)?;

    let variant: Variant = required(kv.take::<String>("variant")?, "variant")?.parse()?;
    let seed = required(kv.take("seed")?, "seed")?;
    let traj_epochs = kv.take_or("traj_epochs", 0)?;
    let assess_epochs = kv.take_or("assess_epochs", 0)?;
    let calibration = CalibrationParams::new(required(kv.take("temperature")?, "temperature")?)?;
    let tau: f64 = required(kv.take("tau")?, "tau")?;
    let has_traj = required(kv.take::<Switch>("trajectory")?, "trajectory")?.0;

    let traj_cfg = if has_traj {
        let d = TrajectoryNetConfig::default();
        Some(TrajectoryNetConfig {
            past_len: required(kv.take("traj.past_len")?, "traj.past_len")?,
            future_len: required(kv.take("traj.future_len")?, "traj.future_len")?,
            map_rows: required(kv.take("traj.map_rows")?, "traj.map_rows")?,
            map_cols: required(kv.take("traj.map_cols")?, "traj.map_cols")?,
            hidden: required(kv.take("traj.hidden")?, "traj.hidden")?,
            stream_channels: required(kv.take("traj.stream_channels")?, "traj.stream_channels")?,
            kernel: kv.take_or("traj.kernel", d.kernel)?,
            use_image: kv.take_or("traj.use_image", Switch(true))?.0,
            use_location: kv.take_or("traj.use_location", Switch(true))?.0,
            location_encoding: match choice(&mut kv, "traj.location_encoding", &["map", "coordinates"])? {
                Some("coordinates") => LocationEncoding::Coordinates,
                _ => LocationEncoding::Map,
            },
        })
    } else {
        None
    };
    let assess_cfg = AssessConfig {
        history_len: required(kv.take("assess.history_len")?, "assess.history_len")?,
        hidden: required(kv.take("assess.hidden")?, "assess.hidden")?,
        kernel: kv.take_or("assess.kernel", 3)?,
        use_heatmap: kv.take_or("assess.use_heatmap", Switch(true))?.0,
    };
    let dp = PipelineConfig::default();
    let pipeline = PipelineConfig {
        lazy: kv.take_or("pipeline.lazy", Switch(dp.lazy))?.0,
        compensate: kv.take_or("pipeline.compensate", Switch(dp.compensate))?.0,
        future_motion: match choice(&mut kv, "pipeline.future_motion", &["constant", "linear"])? {
            Some("linear") => FutureMotion::Linear,
            _ => FutureMotion::Constant,
        },
        traj_evidence: match choice(&mut kv, "pipeline.traj_evidence", &["tracker", "prediction"])? {
            Some("prediction") => TrajEvidence::Prediction,
            _ => TrajEvidence::TrackerHeatmap,
        },
        selection: match choice(&mut kv, "pipeline.selection", &["assessment", "weight"])? {
            Some("weight") => Selection::HeatmapWeight,
            _ => Selection::Assessment,
        },
        rescale_box: kv.take_or("pipeline.rescale_box", Switch(dp.rescale_box))?.0,
        ..dp
    };
    let dt = TrackerConfig::default();
    let tracker = TrackerConfig {
        template_size: match kv.take::<String>("tracker.template_size")?.as_deref() {
            None | Some("auto") => None,
            Some(s) => Some(s.parse().map_err(|e| Error::Checkpoint(format!("`tracker.template_size`: {e}")))?),
        },
        search_factor: kv.take_or("tracker.search_factor", dt.search_factor)?,
        template_source: match choice(&mut kv, "tracker.template_source", &["initial", "previous"])? {
            Some("previous") => TemplateSource::Previous,
            _ => TemplateSource::Initial,
        },
    };
    kv.finish()?;

    let mut arrays = Vec::new();
    let mut lines = body.lines().filter(|l| !l.trim().is_empty());
    while let Some(spec) = lines.next() {
        let (name, shape) = spec
            .split_once(' ')
            .ok_or_else(|| Error::Checkpoint(format!("bad array header `{spec}`")))?;
        let shape = shape
            .split(',')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Checkpoint(format!("array `{name}` shape: {e}")))?;
        let values = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("array `{name}` has no values")))?
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Checkpoint(format!("array `{name}` values: {e}")))?;
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Checkpoint(format!("array `{name}`: {} values for shape {shape:?}", values.len())));
        }
        arrays.push((name.to_string(), shape, values));
    }

    let trajectory = match traj_cfg {
        Some(cfg) => {
            let mut net = TrajectoryNet::new(cfg, 0)?;
            fill("traj", &mut net, &mut arrays)?;
            Some(net)
        }
        None => None,
    };
    let mut assessment = AssessmentNet::new(assess_cfg, 0)?;
    fill("assess", &mut assessment, &mut arrays)?;
    if let Some((name, _, _)) = arrays.first() {
        return Err(Error::Checkpoint(format!("unexpected array `{name}`")));
    }
    let models = Models { trajectory, assessment, calibration, tau };
    Ok(Checkpoint { trained: TrainedVariant { variant, models, pipeline, tracker }, seed, traj_epochs, assess_epochs })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_str(&fs::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(variant: Variant) -> Checkpoint {
        let v = variant;
        let net = TrajectoryNet::new(v.net_config(&TrajectoryNetConfig { map_rows: 8, map_cols: 8, ..TrajectoryNetConfig::desk() }), 3)
            .unwrap();
        let assessment = AssessmentNet::new(v.assess_config(&AssessConfig::default(), net.config.past_len), 4).unwrap();
        let models = Models {
            trajectory: v.uses_trajectory().then_some(net),
            assessment,
            calibration: CalibrationParams::new(1.7).unwrap(),
            tau: 0.613,
        };
        Checkpoint {
            trained: TrainedVariant { variant: v, models, pipeline: v.pipeline_config(), tracker: TrackerConfig::default() },
            seed: 11,
            traj_epochs: 3,
            assess_epochs: 2,
        }
    }

    fn same(a: &Checkpoint, b: &Checkpoint) {
        assert_eq!(a.trained.variant, b.trained.variant);
        assert_eq!(a.trained.models.trajectory, b.trained.models.trajectory);
        assert_eq!(a.trained.models.assessment, b.trained.models.assessment);
        assert_eq!(a.trained.models.calibration, b.trained.models.calibration);
        assert_eq!(a.trained.models.tau, b.trained.models.tau);
        assert_eq!(a.trained.pipeline, b.trained.pipeline);
        assert_eq!(a.trained.tracker, b.trained.tracker);
        assert_eq!((a.seed, a.traj_epochs, a.assess_epochs), (b.seed, b.traj_epochs, b.assess_epochs));
    }

    #[test]
    fn round_trip_is_exact() {
        for v in [Variant::Complete, Variant::TrackerOnly, Variant::NoLoc, Variant::Weight, Variant::NoBg] {
            let c = sample(v);
            let text = to_string(&c);
            let back = from_str(&text, Path::new("mem")).unwrap();
            same(&c, &back);
            assert_eq!(to_string(&back), text);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = to_string(&sample(Variant::Complete)).replace("traj.hidden: 8", "traj.hidden: 6");
        assert!(matches!(from_str(&text, Path::new("mem")), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn missing_array_rejected() {
        let text = to_string(&sample(Variant::Complete));
        let cut: Vec<&str> = text.lines().collect();
        let truncated = cut[..cut.len() - 2].join("\n");
        assert!(matches!(from_str(&truncated, Path::new("mem")), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn header_temperature_visible() {
        let text = to_string(&sample(Variant::Complete));
        assert!(text.lines().any(|l| l == "temperature: 1.7"));
    }
}
