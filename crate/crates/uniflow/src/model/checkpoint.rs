//! Checkpoint format: a JSON header (configs plus the parameter manifest)
//! followed by one little-endian f32 blob. Round trips are bit-exact.
//!
//! Layout: 12-byte magic, u64 LE header length, header JSON, blob.

use super::params::ParamEntry;
use super::{FullConfig, Model};
use crate::error::{Error, Result};
use crate::linalg::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 12] = b"UNIFLOWCKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: FullConfig,
    trained_on: Vec<String>,
    params: Vec<ParamEntry>,
    blob_len: usize,
}

pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    let header = Header {
        config: model.cfg.clone(),
        trained_on: model.trained_on.clone(),
        params: model.store.entries().to_vec(),
        blob_len: model.store.len() * 4,
    };
    let header_json = serde_json::to_vec(&header)?;
    let blob = model.store.to_f32_blob();

    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path.display().to_string(), e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header_json).map_err(io)?;
    w.write_all(&blob).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = std::io::BufReader::new(file);
    let io = |e| Error::io(path.display().to_string(), e);

    let mut magic = [0u8; 12];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes).map_err(io)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json).map_err(io)?;
    let header: Header = serde_json::from_slice(&header_json)?;

    let mut blob = Vec::new();
    r.read_to_end(&mut blob).map_err(io)?;
    if blob.len() != header.blob_len {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes, header says {}",
            blob.len(),
            header.blob_len
        )));
    }

    let mut model: Model<T> = Model::new(header.config, 0)?;
    if model.store.entries() != header.params.as_slice() {
        return Err(Error::Checkpoint(
            "parameter manifest does not match this build".into(),
        ));
    }
    model.store.load_f32_blob(&blob)?;
    model.trained_on = header.trained_on;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GridSpec, Kind, TaskSpec};
    use crate::model::tests::tiny_config;
    use crate::model::SampleCtx;
    use crate::patching::PatchLayout;
    use crate::rng::Stream;

    #[test]
    fn roundtrip_is_bit_exact_and_predictions_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = tiny_config(8, 4);
        let mut model: Model<f32> = Model::new(cfg.clone(), 77).unwrap();
        model.trained_on = vec!["grid_a".into()];
        save(&model, &path).unwrap();
        let loaded: Model<f32> = load(&path).unwrap();
        assert_eq!(model.store.values, loaded.store.values);
        assert_eq!(loaded.trained_on, vec!["grid_a".to_string()]);

        // reloaded model emits identical predictions
        let task = TaskSpec::new(4, 4);
        let layout = PatchLayout::new(
            Kind::Grid,
            &task,
            &cfg.patch,
            Some(GridSpec {
                height: 4,
                width: 4,
            }),
            16,
        )
        .unwrap();
        let ctx = SampleCtx {
            layout: &layout,
            parts: None,
        };
        let mut rng = Stream::new(3);
        let window: Vec<f32> = (0..8 * 16).map(|_| rng.normal() as f32).collect();
        let (a, _) = model.forward_window(&window, &ctx, None).unwrap();
        let (b, _) = loaded.forward_window(&window, &ctx, None).unwrap();
        assert_eq!(a, b);

        // saving the loaded model reproduces the file byte-for-byte
        let path2 = dir.path().join("model2.ckpt");
        save(&loaded, &path2).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let bytes2 = std::fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn manifest_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model: Model<f32> = Model::new(tiny_config(8, 4), 1).unwrap();
        save(&model, &path).unwrap();
        // truncate the blob
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load::<f32>(&path).is_err());
    }
}
