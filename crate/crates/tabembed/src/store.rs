//! Entity embedding materialization, weighted-mean row embeddings and the
//! persisted model bundle.
//!
//! A bundle is everything needed to embed unseen rows without retraining:
//! the schema, the fitted bin layouts, the entity catalog and the entity
//! embedding matrix. The on-disk format is a little-endian binary container
//! with magic `TGE1` and a trailing 64-bit checksum; saving and loading are
//! bit-exact.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::binning::{BinLayout, LayoutKind};
use crate::error::{Error, Result};
use crate::gae::{GaeModel, TrainConfig};
use crate::graph::{incidence_pairs, Entity, EntityCatalog, EntityKind, UnknownPolicy};
use crate::schema::TableSchema;
use crate::table::TypedTable;

const MAGIC: &[u8; 4] = b"TGE1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vectors: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(vectors: Array2<f64>) -> EmbeddingMatrix {
        assert!(vectors.iter().all(|v| v.is_finite()), "embeddings must be finite");
        EmbeddingMatrix { vectors }
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, id: usize) -> ndarray::ArrayView1<'_, f64> {
        self.vectors.row(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowEmbedding {
    pub vector: Vec<f64>,
    /// Number of (entity, weight) pairs that contributed.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub schema: TableSchema,
    pub layouts: BTreeMap<String, BinLayout>,
    pub catalog: EntityCatalog,
    pub embeddings: EmbeddingMatrix,
    pub train_config: TrainConfig,
    pub trace_digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmbedStats {
    pub rows: usize,
    pub unknown_skipped: usize,
}

/// The final encoder output, one vector per catalog entry.
pub fn extract_entity_embeddings(
    model: &GaeModel,
    catalog: &EntityCatalog,
) -> Result<EmbeddingMatrix> {
    if model.n() != catalog.len() {
        return Err(Error::SizeMismatch {
            expected: catalog.len(),
            actual: model.n(),
        });
    }
    Ok(EmbeddingMatrix::new(model.embeddings()))
}

/// Weight-normalized mean of the row's entity embeddings. Missing cells
/// contribute nothing; unknown categorical values follow `policy`.
pub fn embed_row(
    categorical: &[(&str, &str)],
    numeric: &[(&str, f64)],
    bundle: &ModelBundle,
    policy: UnknownPolicy,
) -> Result<RowEmbedding> {
    let (pairs, _) = incidence_pairs(
        categorical.iter().copied(),
        numeric.iter().copied(),
        &bundle.catalog,
        &bundle.layouts,
        policy,
    )?;
    if pairs.is_empty() {
        return Err(Error::NoKnownEntities);
    }
    // Pairs arrive sorted by node id, so the accumulation order does not
    // depend on the caller's cell order.
    Ok(weighted_mean(&pairs, &bundle.embeddings))
}

/// Row-wise [`embed_row`] over a typed table, preserving row order.
pub fn embed_table(
    table: &TypedTable,
    bundle: &ModelBundle,
    policy: UnknownPolicy,
) -> Result<Vec<RowEmbedding>> {
    embed_table_with_stats(table, bundle, policy).map(|(rows, _)| rows)
}

pub fn embed_table_with_stats(
    table: &TypedTable,
    bundle: &ModelBundle,
    policy: UnknownPolicy,
) -> Result<(Vec<RowEmbedding>, EmbedStats)> {
    let mut rows = Vec::with_capacity(table.n_rows);
    let mut stats = EmbedStats {
        rows: table.n_rows,
        ..Default::default()
    };
    for row in 0..table.n_rows {
        let categorical: Vec<(&str, &str)> = table
            .categorical
            .iter()
            .filter_map(|(name, col)| col[row].as_deref().map(|v| (name.as_str(), v)))
            .collect();
        let numeric: Vec<(&str, f64)> = table
            .numeric
            .iter()
            .filter_map(|(name, col)| col[row].map(|v| (name.as_str(), v)))
            .collect();
        let (pairs, skipped) = incidence_pairs(
            categorical.iter().copied(),
            numeric.iter().copied(),
            &bundle.catalog,
            &bundle.layouts,
            policy,
        )?;
        stats.unknown_skipped += skipped;
        if pairs.is_empty() {
            log::error!("row {row}: no known entities");
            return Err(Error::NoKnownEntities);
        }
        rows.push(weighted_mean(&pairs, &bundle.embeddings));
    }
    Ok((rows, stats))
}

fn weighted_mean(pairs: &[(usize, f64)], embeddings: &EmbeddingMatrix) -> RowEmbedding {
    let mut vector = vec![0.0f64; embeddings.dimension()];
    let mut total_weight = 0.0f64;
    for &(id, weight) in pairs {
        for (acc, &v) in vector.iter_mut().zip(embeddings.vector(id).iter()) {
            *acc += weight * v;
        }
        total_weight += weight;
    }
    for v in &mut vector {
        *v /= total_weight;
    }
    RowEmbedding {
        vector,
        support: pairs.len(),
    }
}

impl ModelBundle {
    pub fn schema_fingerprint(&self) -> String {
        self.schema.fingerprint()
    }

    /// Plain-text export: `entity_key<TAB>f1<TAB>...<TAB>fd` per entity.
    pub fn write_entity_embeddings(&self, mut writer: impl Write) -> Result<()> {
        for (id, entity) in self.catalog.entries().iter().enumerate() {
            let key = entity_key(entity);
            let floats: Vec<String> = self
                .embeddings
                .vector(id)
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            writeln!(writer, "{key}\t{}", floats.join("\t"))?;
        }
        Ok(())
    }
}

pub fn entity_key(entity: &Entity) -> String {
    match &entity.kind {
        EntityKind::Categorical(value) => {
            format!("{}={}", escape(&entity.column), escape(value))
        }
        EntityKind::Bin(bin) => format!("{}#b{bin}", escape(&entity.column)),
    }
}

fn escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

// --- binary container ---------------------------------------------------

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let bytes = bundle_to_bytes(bundle);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    bundle_from_bytes(&std::fs::read(path)?)
}

pub fn bundle_to_bytes(bundle: &ModelBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);

    write_blob(&mut out, bundle.schema.to_json_string().as_bytes());

    write_u64(&mut out, bundle.layouts.len() as u64);
    for (column, layout) in &bundle.layouts {
        write_blob(&mut out, column.as_bytes());
        match layout.kind() {
            LayoutKind::Intervals { edges } => {
                out.push(0);
                write_f64_list(&mut out, edges);
            }
            LayoutKind::Distinct { values } => {
                out.push(1);
                write_f64_list(&mut out, values);
            }
        }
    }

    write_u64(&mut out, bundle.catalog.len() as u64);
    for entity in bundle.catalog.entries() {
        write_blob(&mut out, entity.column.as_bytes());
        match &entity.kind {
            EntityKind::Categorical(value) => {
                out.push(0);
                write_blob(&mut out, value.as_bytes());
            }
            EntityKind::Bin(bin) => {
                out.push(1);
                write_u64(&mut out, *bin as u64);
            }
        }
    }

    write_u64(&mut out, bundle.embeddings.n() as u64);
    write_u64(&mut out, bundle.embeddings.dimension() as u64);
    for &v in bundle.embeddings.vectors().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }

    let config_json = serde_json::to_string(&bundle.train_config).expect("config serializes");
    write_blob(&mut out, config_json.as_bytes());
    out.extend_from_slice(&bundle.trace_digest);

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest[..8]);
    out
}

pub fn bundle_from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::FormatVersionMismatch {
            found: String::from_utf8_lossy(bytes).into_owned(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::FormatVersionMismatch {
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::ChecksumMismatch);
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 8);
    let digest = Sha256::digest(body);
    if &digest[..8] != checksum {
        return Err(Error::ChecksumMismatch);
    }

    let mut cursor = Cursor {
        bytes: &body[4..],
        offset: 0,
    };
    let schema = TableSchema::from_json_str(std::str::from_utf8(cursor.blob()?).map_err(
        |_| Error::InvalidSchema("schema blob is not utf-8".to_string()),
    )?)?;

    let layout_count = cursor.u64()? as usize;
    let mut layouts = BTreeMap::new();
    for _ in 0..layout_count {
        let column = cursor.string()?;
        let kind = match cursor.u8()? {
            0 => LayoutKind::Intervals {
                edges: cursor.f64_list()?,
            },
            1 => LayoutKind::Distinct {
                values: cursor.f64_list()?,
            },
            other => {
                return Err(Error::FormatVersionMismatch {
                    found: format!("layout kind {other}"),
                })
            }
        };
        layouts.insert(column.clone(), BinLayout::from_parts(column, kind));
    }

    let entity_count = cursor.u64()? as usize;
    let mut entries = Vec::with_capacity(entity_count);
    for _ in 0..entity_count {
        let column = cursor.string()?;
        let kind = match cursor.u8()? {
            0 => EntityKind::Categorical(cursor.string()?),
            1 => EntityKind::Bin(cursor.u64()? as usize),
            other => {
                return Err(Error::FormatVersionMismatch {
                    found: format!("entity kind {other}"),
                })
            }
        };
        entries.push(Entity { column, kind });
    }
    let catalog = EntityCatalog::from_entries(entries);

    let n = cursor.u64()? as usize;
    let dimension = cursor.u64()? as usize;
    let mut values = Vec::with_capacity(n * dimension);
    for _ in 0..n * dimension {
        values.push(cursor.f64()?);
    }
    let embeddings = EmbeddingMatrix::new(
        Array2::from_shape_vec((n, dimension), values).map_err(|_| Error::ChecksumMismatch)?,
    );

    let train_config: TrainConfig = serde_json::from_slice(cursor.blob()?)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let digest_bytes = cursor.take(32)?;
    let mut trace_digest = [0u8; 32];
    trace_digest.copy_from_slice(digest_bytes);

    Ok(ModelBundle {
        schema,
        layouts,
        catalog,
        embeddings,
        train_config,
        trace_digest,
    })
}

fn write_u64(out: &mut Vec<u8>, value: u64) {
    out.extend_from_slice(&value.to_le_bytes());
}

fn write_blob(out: &mut Vec<u8>, blob: &[u8]) {
    write_u64(out, blob.len() as u64);
    out.extend_from_slice(blob);
}

fn write_f64_list(out: &mut Vec<u8>, values: &[f64]) {
    write_u64(out, values.len() as u64);
    for &v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.offset + len > self.bytes.len() {
            return Err(Error::ChecksumMismatch);
        }
        let slice = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let len = self.u64()? as usize;
        self.take(len)
    }

    fn string(&mut self) -> Result<String> {
        let blob = self.blob()?;
        String::from_utf8(blob.to_vec())
            .map_err(|_| Error::InvalidSchema("non-utf8 string in bundle".to_string()))
    }

    fn f64_list(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        (0..len).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gae::GaeModel;
    use ndarray::array;

    fn tiny_bundle() -> ModelBundle {
        // Manual catalog: one categorical column with two values and one
        // numeric column with a single interior bin [0, 10].
        let schema = TableSchema::from_toml_str(
            r#"
[[columns]]
name = "color"
role = "categorical"

[[columns]]
name = "size"
role = "numeric"
bins = { quantile = 1 }
"#,
        )
        .unwrap();
        let layouts: BTreeMap<String, BinLayout> = [(
            "size".to_string(),
            BinLayout::from_parts(
                "size".to_string(),
                LayoutKind::Intervals {
                    edges: vec![0.0, 10.0],
                },
            ),
        )]
        .into();
        let catalog = EntityCatalog::from_entries(vec![
            Entity {
                column: "color".into(),
                kind: EntityKind::Categorical("blue".into()),
            },
            Entity {
                column: "color".into(),
                kind: EntityKind::Categorical("red".into()),
            },
            Entity {
                column: "size".into(),
                kind: EntityKind::Bin(0),
            },
            Entity {
                column: "size".into(),
                kind: EntityKind::Bin(1),
            },
            Entity {
                column: "size".into(),
                kind: EntityKind::Bin(2),
            },
        ]);
        let vectors = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [2.0, 2.0],
            [4.0, 0.0],
            [0.0, 8.0],
        ];
        ModelBundle {
            schema,
            layouts,
            catalog,
            embeddings: EmbeddingMatrix::new(vectors),
            train_config: TrainConfig::default(),
            trace_digest: [7u8; 32],
        }
    }

    #[test]
    fn extraction_checks_catalog_size() {
        let bundle = tiny_bundle();
        let model = GaeModel::with_weight(Array2::eye(5), array![
            [1.0],
            [2.0],
            [3.0],
            [4.0],
            [5.0]
        ]);
        let embeddings = extract_entity_embeddings(&model, &bundle.catalog).unwrap();
        assert_eq!(embeddings.n(), 5);
        assert_eq!(embeddings.vector(2)[0], 3.0);

        let small = GaeModel::with_weight(Array2::eye(2), array![[1.0], [2.0]]);
        assert!(matches!(
            extract_entity_embeddings(&small, &bundle.catalog),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn twin_nodes_with_identical_rows_embed_identically() {
        // Two disconnected twins: identical propagation rows and identical
        // initialization rows give identical embeddings.
        let propagation = array![[1.0, 0.0], [1.0, 0.0]];
        let weight = array![[0.3, -0.2], [9.0, 9.0]];
        let model = GaeModel::with_weight(propagation, weight);
        let z = model.embeddings();
        assert_eq!(z.row(0), z.row(1));
    }

    #[test]
    fn plain_mean_of_categorical_entities() {
        let bundle = tiny_bundle();
        let row = embed_row(
            &[("color", "blue"), ("color", "red")],
            &[],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        assert_eq!(row.vector, vec![0.5, 0.5]);
        assert_eq!(row.support, 2);
    }

    #[test]
    fn bin_center_enters_with_weight_one() {
        let bundle = tiny_bundle();
        let row = embed_row(&[], &[("size", 5.0)], &bundle, UnknownPolicy::Skip).unwrap();
        assert_eq!(row.vector, vec![4.0, 0.0]);
        assert_eq!(row.support, 1);
    }

    #[test]
    fn split_cell_mixes_adjacent_bins() {
        let bundle = tiny_bundle();
        // 7.5 in [0, 10] leans high: 0.75 on the interior bin (id 3 vector
        // [4, 0]) and 0.25 on the high overflow bin (id 4 vector [0, 8]).
        let row = embed_row(
            &[("color", "blue")],
            &[("size", 7.5)],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        let expected = [
            (1.0 + 0.75 * 4.0 + 0.25 * 0.0) / 2.0,
            (0.0 + 0.75 * 0.0 + 0.25 * 8.0) / 2.0,
        ];
        assert_eq!(row.vector, expected.to_vec());
        assert_eq!(row.support, 3);
    }

    #[test]
    fn cell_order_does_not_matter() {
        let bundle = tiny_bundle();
        let a = embed_row(
            &[("color", "blue"), ("color", "red")],
            &[("size", 7.5)],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        let b = embed_row(
            &[("color", "red"), ("color", "blue")],
            &[("size", 7.5)],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_entity_vectors_average_to_themselves() {
        let mut bundle = tiny_bundle();
        bundle.embeddings = EmbeddingMatrix::new(Array2::from_elem((5, 2), 1.5));
        let row = embed_row(
            &[("color", "blue")],
            &[("size", 7.5)],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        assert_eq!(row.vector, vec![1.5, 1.5]);
    }

    #[test]
    fn row_embedding_stays_in_the_convex_hull() {
        let bundle = tiny_bundle();
        let row = embed_row(
            &[("color", "blue"), ("color", "red")],
            &[("size", 2.5)],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        for (coordinate, &v) in row.vector.iter().enumerate() {
            let contributing = [0usize, 1, 2, 3];
            let lo = contributing
                .iter()
                .map(|&id| bundle.embeddings.vector(id)[coordinate])
                .fold(f64::INFINITY, f64::min);
            let hi = contributing
                .iter()
                .map(|&id| bundle.embeddings.vector(id)[coordinate])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn unknown_value_policy() {
        let bundle = tiny_bundle();
        let skipped = embed_row(
            &[("color", "green"), ("color", "red")],
            &[],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        assert_eq!(skipped.vector, vec![0.0, 1.0]);
        assert!(matches!(
            embed_row(&[("color", "green")], &[], &bundle, UnknownPolicy::Error),
            Err(Error::UnknownEntity { .. })
        ));
        assert!(matches!(
            embed_row(&[("color", "green")], &[], &bundle, UnknownPolicy::Skip),
            Err(Error::NoKnownEntities)
        ));
        assert!(matches!(
            embed_row(&[], &[], &bundle, UnknownPolicy::Skip),
            Err(Error::NoKnownEntities)
        ));
    }

    #[test]
    fn missing_cell_equals_absent_column() {
        let bundle = tiny_bundle();
        let with_missing = embed_row(
            &[("color", "blue")],
            &[],
            &bundle,
            UnknownPolicy::Skip,
        )
        .unwrap();
        // The same row expressed through embed_table with a missing size.
        let table = crate::table::parse_reader(
            "color,size\nblue,\n".as_bytes(),
            &bundle.schema,
        )
        .unwrap();
        let rows = embed_table(&table, &bundle, UnknownPolicy::Skip).unwrap();
        assert_eq!(rows[0], with_missing);
    }

    #[test]
    fn embed_table_preserves_order_and_counts_skips() {
        let bundle = tiny_bundle();
        let table = crate::table::parse_reader(
            "color,size\nblue,5\ngreen,5\nred,\n".as_bytes(),
            &bundle.schema,
        )
        .unwrap();
        let (rows, stats) = embed_table_with_stats(&table, &bundle, UnknownPolicy::Skip).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(stats.unknown_skipped, 1);
        assert_eq!(rows[2].vector, vec![0.0, 1.0]);

        let empty = crate::table::parse_reader("color,size\n".as_bytes(), &bundle.schema).unwrap();
        assert!(embed_table(&empty, &bundle, UnknownPolicy::Skip).unwrap().is_empty());
    }

    #[test]
    fn bundle_round_trip_is_byte_exact() {
        let bundle = tiny_bundle();
        let bytes = bundle_to_bytes(&bundle);
        let loaded = bundle_from_bytes(&bytes).unwrap();
        assert_eq!(loaded, bundle);
        assert_eq!(bundle_to_bytes(&loaded), bytes);
    }

    #[test]
    fn truncated_bundle_fails_the_checksum() {
        let bytes = bundle_to_bytes(&tiny_bundle());
        let truncated = &bytes[..bytes.len() - 9];
        assert!(matches!(
            bundle_from_bytes(truncated),
            Err(Error::ChecksumMismatch)
        ));
        // Flipping a payload byte is also caught.
        let mut corrupted = bytes.clone();
        corrupted[20] ^= 0xff;
        assert!(matches!(
            bundle_from_bytes(&corrupted),
            Err(Error::ChecksumMismatch)
        ));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = bundle_to_bytes(&tiny_bundle());
        bytes[3] = b'2';
        assert!(matches!(
            bundle_from_bytes(&bytes),
            Err(Error::FormatVersionMismatch { .. })
        ));
    }

    #[test]
    fn entity_keys_are_readable_and_escaped() {
        let bundle = tiny_bundle();
        let mut out = Vec::new();
        bundle.write_entity_embeddings(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("color=blue\t1\t0\n"));
        assert!(text.contains("size#b1\t4\t0\n"));

        let weird = Entity {
            column: "a\tb".into(),
            kind: EntityKind::Categorical("x\ny".into()),
        };
        assert_eq!(entity_key(&weird), "a\\tb=x\\ny");
    }
}
