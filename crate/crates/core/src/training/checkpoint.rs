use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};

const FORMAT: &str = "segmatch-checkpoint";
const VERSION: u32 = 1;

/// Everything needed to resume or evaluate a run: parameters, the config
/// that produced them, and the RNG position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, state: TrainState) -> Checkpoint {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            config,
            state,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }
}

/// Decodes and validates a checkpoint document. `file` names the source in
/// diagnostics.
pub fn parse_checkpoint(text: &str, file: &str) -> Result<Checkpoint> {
    let ck: Checkpoint =
        serde_json::from_str(text).map_err(|e| Error::parse(file, e.line(), e.to_string()))?;
    let fail = |msg: String| Error::parse(file, 1, msg);
    if ck.format != FORMAT {
        return Err(fail(format!("not a checkpoint (format {:?})", ck.format)));
    }
    if ck.version != VERSION {
        return Err(fail(format!(
            "unsupported checkpoint version {}",
            ck.version
        )));
    }
    ck.config.validate().map_err(|e| fail(e.to_string()))?;
    let maps = &ck.state.maps;
    maps.validate().map_err(|e| fail(e.to_string()))?;
    let dims = ck.state.dims;
    let inputs = [
        ("sentence", maps.efm.sentence.input_dim(), dims.sentence),
        ("shot", maps.efm.shot.input_dim(), dims.shot),
        (
            "text character",
            maps.cim.text_character.input_dim(),
            dims.semantic_node,
        ),
        (
            "text action",
            maps.cim.text_action.input_dim(),
            dims.semantic_node,
        ),
        (
            "visual character",
            maps.cim.visual_character.input_dim(),
            dims.visual_node,
        ),
        (
            "visual action",
            maps.cim.visual_action.input_dim(),
            dims.visual_node,
        ),
    ];
    for (name, got, want) in inputs {
        if got != want {
            return Err(fail(format!(
                "{name} map takes dim {got}, dims record {want}"
            )));
        }
    }
    let out = maps.efm.sentence.output_dim();
    if maps.efm.shot.output_dim() != out {
        return Err(fail("event-flow maps disagree on output dim".into()));
    }
    let cim_out = maps.cim.text_character.output_dim();
    if [
        &maps.cim.text_action,
        &maps.cim.visual_character,
        &maps.cim.visual_action,
    ]
    .iter()
    .any(|m| m.output_dim() != cim_out)
    {
        return Err(fail("graph maps disagree on output dim".into()));
    }
    if maps
        .all()
        .iter()
        .any(|m| m.normalize != ck.config.unit_embeddings)
    {
        return Err(fail(
            "map normalization disagrees with unit_embeddings".into(),
        ));
    }
    if ck
        .state
        .loss_history
        .iter()
        .any(|l| !(l.is_finite() && *l >= 0.0))
    {
        return Err(fail(
            "loss history has a negative or non-finite entry".into(),
        ));
    }
    Ok(ck)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ck.to_json()).map_err(|e| Error::io(path, e))
}
