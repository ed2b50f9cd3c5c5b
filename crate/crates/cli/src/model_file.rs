//! Versioned on-disk representation of a trained model.

use crate::AppError;
use serde::{Deserialize, Serialize};
use std::path::Path;
use survscale::TrainedModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model: TrainedModel,
}

pub fn write_model(model: &TrainedModel, path: &Path) -> Result<(), AppError> {
    let doc = ModelDocument { format_version: MODEL_FORMAT_VERSION, model: model.clone() };
    let body = serde_json::to_string_pretty(&doc)
        .map_err(|e| AppError::Io(format!("serialising model: {e}")))?;
    std::fs::write(path, body)
        .map_err(|e| AppError::Io(format!("writing {}: {e}", path.display())))
}

pub fn read_model(path: &Path) -> Result<TrainedModel, AppError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| AppError::Io(format!("reading {}: {e}", path.display())))?;
    let doc: ModelDocument = serde_json::from_str(&body)
        .map_err(|e| AppError::Config(format!("{} is not a valid model file: {e}", path.display())))?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(AppError::Config(format!(
            "{}: unsupported model format_version {} (this build reads {MODEL_FORMAT_VERSION})",
            path.display(),
            doc.format_version
        )));
    }
    Ok(doc.model)
}
