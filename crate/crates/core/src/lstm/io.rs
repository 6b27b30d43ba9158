use std::path::{Path, PathBuf};

use super::{Layout, LstmModel, GATE_ORDER, TENSOR_ORDER};
use crate::dataset::{meta_from_kv, meta_to_text};
use crate::error::{Error, Result};
use crate::kv::KvFile;

const MODEL_FORMAT: &str = "lifi-po-lstm";

fn sibling(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.meta` (text) and `<stem>.bin` (little-endian f64 in
/// [`TENSOR_ORDER`]). Returns the metadata path.
pub fn save_model(model: &LstmModel, stem: &Path) -> Result<PathBuf> {
    let meta_path = sibling(stem, "meta");
    let bin_path = sibling(stem, "bin");
    let bin_name = bin_path.file_name().expect("file name").to_string_lossy().into_owned();
    let mut text = format!(
        "format: {MODEL_FORMAT}\nversion: 1\nhidden_size: {}\nactivation: {}\nrecurrent_activation: {}\n\
         gate_order: {GATE_ORDER}\ntensor_order: {TENSOR_ORDER}\nparam_count: {}\nparams: {bin_name}\n",
        model.hidden,
        model.activation,
        model.recurrent_activation,
        model.params.len()
    );
    text.push_str(&meta_to_text(&model.meta));
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    let bytes: Vec<u8> = model.params.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
    Ok(meta_path)
}

pub fn load_model(path: &Path) -> Result<LstmModel> {
    let meta_path = if path.extension().is_some_and(|e| e == "meta") {
        path.to_path_buf()
    } else {
        sibling(path, "meta")
    };
    let kv = KvFile::read(&meta_path)?;
    let bad = |message: String| Error::Format {
        path: meta_path.clone(),
        message,
    };
    if kv.str("format")? != MODEL_FORMAT {
        return Err(bad("not an LSTM model file".into()));
    }
    for (key, want) in [
        ("activation", "tanh"),
        ("recurrent_activation", "sigmoid"),
        ("gate_order", GATE_ORDER),
        ("tensor_order", TENSOR_ORDER),
    ] {
        let got = kv.str(key)?;
        if got != want {
            return Err(bad(format!("unsupported {key} `{got}` (expected `{want}`)")));
        }
    }
    let hidden: usize = kv.get("hidden_size")?;
    let meta = meta_from_kv(&kv)?;
    let layout = Layout::new(meta.m, hidden, meta.label_len());
    let count: usize = kv.get("param_count")?;
    if count != layout.len {
        return Err(bad(format!("param_count {count} does not match the declared shapes ({})", layout.len)));
    }
    let bin_path = meta_path.with_file_name(kv.str("params")?);
    let bytes = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() != count * 8 {
        return Err(Error::Format {
            path: bin_path,
            message: format!("expected {count} parameters ({} bytes), found {} bytes", count * 8, bytes.len()),
        });
    }
    let params = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let model = LstmModel {
        hidden,
        params,
        meta,
        activation: "tanh".into(),
        recurrent_activation: "sigmoid".into(),
    };
    model.check_finite()?;
    Ok(model)
}
