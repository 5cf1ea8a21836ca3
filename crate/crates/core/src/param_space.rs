//! Flat parameter vectors with a mandatory layer partition, task vectors and
//! the source-model pool.
//!
//! Every model is a flat `f32` array plus a list of `(start, len)` layer
//! blocks. Arithmetic accumulates in `f64` and rounds once on the way out.
//! Any result that is not finite is rejected instead of propagated.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Contiguous `(start, len)` block of a [`ParamVector`].
pub type LayerSpan = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f32>,
    layers: Vec<LayerSpan>,
}

impl ParamVector {
    pub fn new(values: Vec<f32>, layers: Vec<LayerSpan>) -> Result<Self> {
        let mut cursor = 0usize;
        for (i, &(start, len)) in layers.iter().enumerate() {
            if start != cursor {
                return Err(Error::Structure(format!(
                    "layer {i} starts at {start}, expected {cursor}"
                )));
            }
            cursor = start
                .checked_add(len)
                .ok_or_else(|| Error::Structure("layer span overflows".into()))?;
        }
        if cursor != values.len() || layers.is_empty() {
            return Err(Error::Structure(format!(
                "layers cover {cursor} of {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ParamVector::new"));
        }
        Ok(Self { values, layers })
    }

    /// A vector whose single layer spans every value.
    pub fn single_layer(values: Vec<f32>) -> Result<Self> {
        let len = values.len();
        Self::new(values, vec![(0, len)])
    }

    pub fn zeros(layers: &[LayerSpan]) -> Result<Self> {
        let len = layers.last().map(|&(s, l)| s + l).unwrap_or(0);
        Self::new(vec![0.0; len], layers.to_vec())
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layers(&self) -> &[LayerSpan] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, index: usize) -> Result<&[f32]> {
        let &(start, len) = self
            .layers
            .get(index)
            .ok_or_else(|| Error::Index(format!("layer {index} of {}", self.layers.len())))?;
        Ok(&self.values[start..start + len])
    }

    pub fn same_structure(&self, other: &ParamVector) -> bool {
        self.layers == other.layers
    }

    fn check_structure(&self, other: &ParamVector) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::Structure(format!(
                "layer layouts differ ({} vs {} layers, {} vs {} values)",
                self.layers.len(),
                other.layers.len(),
                self.len(),
                other.len()
            )))
        }
    }

    /// `self + scale * src`, element-wise.
    pub fn axpy(&self, scale: f64, src: &ParamVector) -> Result<ParamVector> {
        let scales = vec![scale; self.layer_count()];
        self.add_scaled_layers(&[(src, &scales)])
    }

    /// `self + scale * src` on the addressed layer only; every other layer is
    /// copied bit-for-bit.
    pub fn layer_axpy(&self, layer: usize, scale: f64, src: &ParamVector) -> Result<ParamVector> {
        self.check_structure(src)?;
        if layer >= self.layer_count() {
            return Err(Error::Index(format!(
                "layer {layer} of {}",
                self.layer_count()
            )));
        }
        let mut out = self.values.clone();
        let (start, len) = self.layers[layer];
        let span = start..start + len;
        for (o, &s) in out[span.clone()].iter_mut().zip(&src.values[span]) {
            let v = (*o as f64 + scale * s as f64) as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite("layer_axpy"));
            }
            *o = v;
        }
        Ok(ParamVector {
            values: out,
            layers: self.layers.clone(),
        })
    }

    /// `self + sum_k scales_k[l] * src_k` where the scale applied to each
    /// element depends on the layer it lives in. Accumulates in `f64`.
    pub fn add_scaled_layers(&self, terms: &[(&ParamVector, &[f64])]) -> Result<ParamVector> {
        for (src, scales) in terms {
            self.check_structure(src)?;
            if scales.len() != self.layer_count() {
                return Err(Error::Structure(format!(
                    "{} layer scales for {} layers",
                    scales.len(),
                    self.layer_count()
                )));
            }
        }
        let mut acc: Vec<f64> = self.values.iter().map(|&v| v as f64).collect();
        for (src, scales) in terms {
            for (l, &(start, len)) in self.layers.iter().enumerate() {
                let s = scales[l];
                if s == 0.0 {
                    continue;
                }
                for (a, &x) in acc[start..start + len]
                    .iter_mut()
                    .zip(&src.values[start..start + len])
                {
                    *a += s * x as f64;
                }
            }
        }
        let mut values = Vec::with_capacity(acc.len());
        for a in acc {
            let v = a as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite("add_scaled_layers"));
            }
            values.push(v);
        }
        Ok(ParamVector {
            values,
            layers: self.layers.clone(),
        })
    }

    /// `self - other`.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.axpy(-1.0, other)
    }

    pub fn map_values(&self, f: impl Fn(usize, f32) -> f32) -> Result<ParamVector> {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        ParamVector::new(values, self.layers.clone())
    }
}

/// Fine-tuned parameters minus the base parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskVector {
    delta: ParamVector,
}

impl TaskVector {
    pub fn new(delta: ParamVector) -> Self {
        Self { delta }
    }

    pub fn between(base: &ParamVector, finetuned: &ParamVector) -> Result<Self> {
        Ok(Self {
            delta: finetuned.sub(base)?,
        })
    }

    pub fn delta(&self) -> &ParamVector {
        &self.delta
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPool {
    base: ParamVector,
    members: Vec<(String, TaskVector)>,
}

impl ModelPool {
    pub fn new(base: ParamVector, members: Vec<(String, TaskVector)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Structure("model pool needs at least one member".into()));
        }
        for (i, (id, tv)) in members.iter().enumerate() {
            if !tv.delta.same_structure(&base) {
                return Err(Error::Structure(format!(
                    "member `{id}` does not share the base layer layout"
                )));
            }
            if members[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::Structure(format!("duplicate task id `{id}`")));
            }
        }
        Ok(Self { base, members })
    }

    pub fn base(&self) -> &ParamVector {
        &self.base
    }

    pub fn members(&self) -> &[(String, TaskVector)] {
        &self.members
    }

    /// Number of merged source models.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn layer_count(&self) -> usize {
        self.base.layer_count()
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(id, _)| id.as_str())
    }

    /// The pool with `task_id`'s own member removed (hold-one-out).
    pub fn without(&self, task_id: &str) -> Result<ModelPool> {
        let members: Vec<_> = self
            .members
            .iter()
            .filter(|(id, _)| id != task_id)
            .cloned()
            .collect();
        ModelPool::new(self.base.clone(), members)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        pool_save(self, dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        pool_load(dir)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "payload.bin";

/// On-disk description of a pool; the payload holds `1 + m` length-prefixed
/// blocks (base first, then each task vector in `task_ids` order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolManifest {
    pub base_len: usize,
    pub layer_offsets: Vec<LayerSpan>,
    #[serde(rename = "M")]
    pub m: usize,
    pub task_ids: Vec<String>,
    pub dtype: String,
    /// Lowercase hex SHA-256 of each block's little-endian value bytes.
    pub checksums: Vec<String>,
}

fn block_bytes(values: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn checksum(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn pool_save(pool: &ModelPool, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blocks: Vec<&ParamVector> = std::iter::once(&pool.base)
        .chain(pool.members.iter().map(|(_, tv)| &tv.delta))
        .collect();

    let mut payload = Vec::new();
    let mut checksums = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let bytes = block_bytes(block.values());
        payload.extend_from_slice(&(block.len() as u64).to_le_bytes());
        payload.extend_from_slice(&bytes);
        checksums.push(checksum(&bytes));
    }
    let manifest = PoolManifest {
        base_len: pool.base.len(),
        layer_offsets: pool.base.layers().to_vec(),
        m: pool.len(),
        task_ids: pool.task_ids().map(str::to_owned).collect(),
        dtype: "f32le".into(),
        checksums,
    };

    let payload_path = dir.join(PAYLOAD_FILE);
    let mut f = fs::File::create(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    f.write_all(&payload).map_err(|e| Error::io(&payload_path, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest encoding: {e}")))?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
}

pub fn pool_load(dir: &Path) -> Result<ModelPool> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: PoolManifest = serde_json::from_slice(&raw)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;

    let payload_path = dir.join(PAYLOAD_FILE);
    let mut payload = Vec::new();
    fs::File::open(&payload_path)
        .and_then(|mut f| f.read_to_end(&mut payload))
        .map_err(|e| Error::io(&payload_path, e))?;

    decode_pool(&manifest, &payload)
}

/// Decodes a payload against its manifest, checking every length header and
/// checksum.
pub fn decode_pool(manifest: &PoolManifest, payload: &[u8]) -> Result<ModelPool> {
    if manifest.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported dtype `{}`", manifest.dtype)));
    }
    if manifest.task_ids.len() != manifest.m {
        return Err(Error::Format(format!(
            "manifest lists {} task ids for M = {}",
            manifest.task_ids.len(),
            manifest.m
        )));
    }
    let expected_blocks = manifest.m + 1;
    if manifest.checksums.len() != expected_blocks {
        return Err(Error::Format(format!(
            "{} checksums for {expected_blocks} blocks",
            manifest.checksums.len()
        )));
    }

    let mut cursor = 0usize;
    let mut blocks = Vec::with_capacity(expected_blocks);
    for b in 0..expected_blocks {
        let header = payload
            .get(cursor..cursor + 8)
            .ok_or_else(|| Error::Format(format!("payload ends before block {b} header")))?;
        let count = u64::from_le_bytes(header.try_into().expect("8-byte slice")) as usize;
        cursor += 8;
        if count != manifest.base_len {
            return Err(Error::Format(format!(
                "block {b} holds {count} values, manifest base_len is {}",
                manifest.base_len
            )));
        }
        let nbytes = count * 4;
        let bytes = payload
            .get(cursor..cursor + nbytes)
            .ok_or_else(|| Error::Format(format!("block {b} truncated")))?;
        cursor += nbytes;
        if checksum(bytes) != manifest.checksums[b] {
            return Err(Error::Format(format!("checksum mismatch on block {b}")));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect::<Vec<_>>();
        let pv = ParamVector::new(values, manifest.layer_offsets.clone())
            .map_err(|e| Error::Format(format!("block {b}: {e}")))?;
        blocks.push(pv);
    }
    if cursor != payload.len() {
        return Err(Error::Format(format!(
            "{} trailing payload bytes",
            payload.len() - cursor
        )));
    }

    let mut blocks = blocks.into_iter();
    let base = blocks.next().expect("base block");
    let members = manifest
        .task_ids
        .iter()
        .cloned()
        .zip(blocks.map(TaskVector::new))
        .collect();
    ModelPool::new(base, members).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: &[f32]) -> ParamVector {
        ParamVector::single_layer(values.to_vec()).unwrap()
    }

    fn two_layer(a: f32, b: f32) -> ParamVector {
        ParamVector::new(vec![a, b], vec![(0, 1), (1, 1)]).unwrap()
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(pv(&[1., 2.]).axpy(0.0, &pv(&[7., 9.])).unwrap(), pv(&[1., 2.]));
        assert_eq!(pv(&[0., 0.]).axpy(1.0, &pv(&[3., 4.])).unwrap(), pv(&[3., 4.]));
        assert_eq!(pv(&[1., 2.]).axpy(0.5, &pv(&[2., 2.])).unwrap(), pv(&[2., 3.]));
    }

    #[test]
    fn axpy_rejects_mismatched_layouts() {
        let err = pv(&[1., 2.]).axpy(1.0, &two_layer(1., 2.)).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
        let err = pv(&[1., 2.]).axpy(1.0, &pv(&[1., 2., 3.])).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn overflow_raises_instead_of_propagating() {
        let big = pv(&[f32::MAX]);
        assert!(matches!(big.axpy(2.0, &big), Err(Error::NonFinite(_))));
        assert!(ParamVector::single_layer(vec![f32::NAN]).is_err());
    }

    #[test]
    fn layer_axpy_examples() {
        let dst = two_layer(1., 2.);
        let src = two_layer(10., 10.);
        assert_eq!(dst.layer_axpy(1, 0.0, &src).unwrap(), dst);
        assert_eq!(dst.layer_axpy(1, 1.0, &src).unwrap(), two_layer(1., 12.));
        assert!(matches!(dst.layer_axpy(2, 1.0, &src), Err(Error::Index(_))));
    }

    #[test]
    fn layer_axpy_matches_axpy_on_its_slice() {
        let dst = ParamVector::new(vec![1., 2., 3., 4., 5.], vec![(0, 2), (2, 3)]).unwrap();
        let src = ParamVector::new(vec![0.5, -1., 2., 8., -3.], vec![(0, 2), (2, 3)]).unwrap();
        let by_layer = dst.layer_axpy(0, 1.0, &src).unwrap();
        let full = dst.axpy(1.0, &src).unwrap();
        assert_eq!(by_layer.layer(0).unwrap(), full.layer(0).unwrap());
        assert_eq!(by_layer.layer(1).unwrap(), dst.layer(1).unwrap());
    }

    #[test]
    fn layout_must_partition_values() {
        assert!(ParamVector::new(vec![0.; 3], vec![(0, 1), (2, 1)]).is_err());
        assert!(ParamVector::new(vec![0.; 3], vec![(0, 2), (1, 2)]).is_err());
        assert!(ParamVector::new(vec![0.; 3], vec![(0, 2)]).is_err());
        assert!(ParamVector::new(vec![0.; 3], vec![(0, 2), (2, 1)]).is_ok());
    }

    fn sample_pool() -> ModelPool {
        let layers = vec![(0, 2), (2, 1)];
        let base = ParamVector::new(vec![0.1, -0.2, 0.3], layers.clone()).unwrap();
        let a = ParamVector::new(vec![1.0, 2.0, f32::MIN_POSITIVE], layers.clone()).unwrap();
        let b = ParamVector::new(vec![-4.5, 0.0, 1e-7], layers).unwrap();
        ModelPool::new(
            base,
            vec![("a".into(), TaskVector::new(a)), ("b".into(), TaskVector::new(b))],
        )
        .unwrap()
    }

    #[test]
    fn pool_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let pool = sample_pool();
        pool.save(dir.path()).unwrap();
        let back = ModelPool::load(dir.path()).unwrap();
        assert_eq!(back, pool);
        for ((_, x), (_, y)) in back.members().iter().zip(pool.members()) {
            let xb: Vec<u32> = x.delta().values().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.delta().values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        sample_pool().save(dir.path()).unwrap();
        let path = dir.path().join(PAYLOAD_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(ModelPool::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_member_count_must_match_payload() {
        let dir = tempfile::tempdir().unwrap();
        sample_pool().save(dir.path()).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let mut manifest: PoolManifest =
            serde_json::from_slice(&fs::read(&mpath).unwrap()).unwrap();
        manifest.m = 3;
        manifest.task_ids.push("c".into());
        manifest.checksums.push(manifest.checksums[1].clone());
        fs::write(&mpath, serde_json::to_vec(&manifest).unwrap()).unwrap();
        assert!(matches!(ModelPool::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn corrupted_block_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        sample_pool().save(dir.path()).unwrap();
        let path = dir.path().join(PAYLOAD_FILE);
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        let err = ModelPool::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn pool_invariants() {
        let base = pv(&[0.0, 0.0]);
        assert!(ModelPool::new(base.clone(), vec![]).is_err());
        let tv = TaskVector::new(pv(&[1.0, 1.0]));
        assert!(ModelPool::new(base.clone(), vec![("x".into(), tv.clone()), ("x".into(), tv.clone())]).is_err());
        let wrong = TaskVector::new(two_layer(1.0, 1.0));
        assert!(ModelPool::new(base.clone(), vec![("x".into(), wrong)]).is_err());
        let pool = ModelPool::new(base, vec![("x".into(), tv.clone()), ("y".into(), tv)]).unwrap();
        let held = pool.without("x").unwrap();
        assert_eq!(held.task_ids().collect::<Vec<_>>(), vec!["y"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn axpy_is_linear_in_scale(
                vals in proptest::collection::vec((-100f32..100f32, -100f32..100f32), 1..40),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
            ) {
                let dst = ParamVector::single_layer(vals.iter().map(|p| p.0).collect()).unwrap();
                let src = ParamVector::single_layer(vals.iter().map(|p| p.1).collect()).unwrap();
                let once = dst.axpy(a + b, &src).unwrap();
                let twice = dst.axpy(a, &src).unwrap().axpy(b, &src).unwrap();
                for (i, (x, y)) in once.values().iter().zip(twice.values()).enumerate() {
                    // relative to the magnitudes entering the sum; the chained path rounds twice
                    let scale = (vals[i].0.abs() as f64 + (a.abs() + b.abs()) * vals[i].1.abs() as f64).max(1e-30);
                    prop_assert!(((x - y) as f64).abs() <= 1e-6 * scale);
                }
            }

            #[test]
            fn serialization_round_trips(
                base in proptest::collection::vec(-1e30f32..1e30f32, 1..20),
                split in 0usize..20,
            ) {
                let len = base.len();
                let cut = split.min(len - 1);
                let layers = if cut == 0 { vec![(0, len)] } else { vec![(0, cut), (cut, len - cut)] };
                let b = ParamVector::new(base.clone(), layers.clone()).unwrap();
                let d = ParamVector::new(base.iter().map(|v| -v / 3.0).collect(), layers).unwrap();
                let pool = ModelPool::new(b, vec![("t".into(), TaskVector::new(d))]).unwrap();
                let dir = tempfile::tempdir().unwrap();
                pool.save(dir.path()).unwrap();
                prop_assert_eq!(ModelPool::load(dir.path()).unwrap(), pool);
            }
        }
    }
}
