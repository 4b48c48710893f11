//! Entity catalog, row-entity incidence and the reduced weighted entity graph.
//!
//! Conceptually the table first becomes a bipartite graph: every row is a
//! node linked to the entities occurring in it (categorical values with
//! weight 1, numeric bins with the membership weights from the binning
//! module). Row nodes are then eliminated: two entities co-occurring in a row
//! gain an edge weighted by the product of their row weights, summed over all
//! rows. With self-loops enabled, one-step random walks on the reduced graph
//! have the same dynamics as two-step entity-row-entity walks on the
//! bipartite graph.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::binning::BinLayout;
use crate::error::{Error, Result};
use crate::table::TypedTable;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    /// A unique value of a categorical column.
    Categorical(String),
    /// A bin id of a numeric column's layout (including overflow bins).
    Bin(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub column: String,
    pub kind: EntityKind,
}

/// All unique entities of a table with dense, canonically ordered node ids:
/// columns sorted by name, categorical values sorted, bins in bin-id order.
/// The ordering is independent of row and column order in the input file.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityCatalog {
    entries: Vec<Entity>,
    ids: HashMap<(String, EntityKind), usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownPolicy {
    /// Drop cells whose categorical value is not in the catalog.
    Skip,
    /// Fail on the first unknown categorical value.
    Error,
}

impl EntityCatalog {
    pub fn build(table: &TypedTable, layouts: &BTreeMap<String, BinLayout>) -> EntityCatalog {
        let mut columns: Vec<(&str, bool)> = table
            .categorical
            .keys()
            .map(|name| (name.as_str(), true))
            .chain(table.numeric.keys().map(|name| (name.as_str(), false)))
            .collect();
        columns.sort();

        let mut entries = Vec::new();
        for (name, is_categorical) in columns {
            if is_categorical {
                let mut values: Vec<&String> =
                    table.categorical[name].iter().flatten().collect();
                values.sort();
                values.dedup();
                entries.extend(values.into_iter().map(|v| Entity {
                    column: name.to_string(),
                    kind: EntityKind::Categorical(v.clone()),
                }));
            } else if let Some(layout) = layouts.get(name) {
                entries.extend((0..layout.bin_count()).map(|bin| Entity {
                    column: name.to_string(),
                    kind: EntityKind::Bin(bin),
                }));
            }
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<Entity>) -> EntityCatalog {
        let ids = entries
            .iter()
            .enumerate()
            .map(|(id, e)| ((e.column.clone(), e.kind.clone()), id))
            .collect();
        EntityCatalog { entries, ids }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entity] {
        &self.entries
    }

    pub fn entity(&self, id: usize) -> &Entity {
        &self.entries[id]
    }

    pub fn categorical_id(&self, column: &str, value: &str) -> Option<usize> {
        self.ids
            .get(&(column.to_string(), EntityKind::Categorical(value.to_string())))
            .copied()
    }

    pub fn bin_id(&self, column: &str, bin: usize) -> Option<usize> {
        self.ids
            .get(&(column.to_string(), EntityKind::Bin(bin)))
            .copied()
    }
}

/// Per row, the incident entity nodes with their bipartite edge weights,
/// sorted by node id. Weights of one non-missing cell sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIncidence {
    rows: Vec<Vec<(usize, f64)>>,
}

impl RowIncidence {
    pub fn build(
        table: &TypedTable,
        catalog: &EntityCatalog,
        layouts: &BTreeMap<String, BinLayout>,
    ) -> Result<RowIncidence> {
        let mut rows = Vec::with_capacity(table.n_rows);
        for row in 0..table.n_rows {
            let cats = table
                .categorical
                .iter()
                .filter_map(|(name, col)| col[row].as_deref().map(|v| (name.as_str(), v)));
            let nums = table
                .numeric
                .iter()
                .filter_map(|(name, col)| col[row].map(|v| (name.as_str(), v)));
            let (pairs, _) = incidence_pairs(cats, nums, catalog, layouts, UnknownPolicy::Error)?;
            rows.push(pairs);
        }
        Ok(RowIncidence { rows })
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Weights of one row's non-missing cells against the catalog, sorted by
/// node id. Returns the pairs and the number of skipped unknown values.
pub fn incidence_pairs<'a>(
    categorical: impl Iterator<Item = (&'a str, &'a str)>,
    numeric: impl Iterator<Item = (&'a str, f64)>,
    catalog: &EntityCatalog,
    layouts: &BTreeMap<String, BinLayout>,
    unknown: UnknownPolicy,
) -> Result<(Vec<(usize, f64)>, usize)> {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for (column, value) in categorical {
        match catalog.categorical_id(column, value) {
            Some(id) => pairs.push((id, 1.0)),
            None => match unknown {
                UnknownPolicy::Skip => {
                    log::debug!("skipping unknown entity {column}={value:?}");
                    skipped += 1;
                }
                UnknownPolicy::Error => {
                    return Err(Error::UnknownEntity {
                        column: column.to_string(),
                        value: value.to_string(),
                    })
                }
            },
        }
    }
    for (column, value) in numeric {
        let Some(layout) = layouts.get(column) else {
            return Err(Error::MissingColumn(column.to_string()));
        };
        let assignment = layout.assign(value);
        let primary = catalog
            .bin_id(column, assignment.primary)
            .ok_or_else(|| Error::UnknownEntity {
                column: column.to_string(),
                value: format!("bin {}", assignment.primary),
            })?;
        pairs.push((primary, assignment.primary_weight));
        if let Some((bin, weight)) = assignment.secondary {
            let id = catalog.bin_id(column, bin).ok_or_else(|| Error::UnknownEntity {
                column: column.to_string(),
                value: format!("bin {bin}"),
            })?;
            pairs.push((id, weight));
        }
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((pairs, skipped))
}

/// Reduced entity graph: a symmetric weighted edge map keyed by
/// `(min_id, max_id)`, with no zero-weight edges stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: BTreeMap<(usize, usize), f64>,
    self_loops: bool,
}

impl WeightedGraph {
    /// Eliminate the row nodes: for every unordered entity pair of a row add
    /// the product of their row weights, summing over rows. With
    /// `self_loops`, each incident entity also adds its squared weight to
    /// its diagonal edge.
    ///
    /// Per-edge contributions are accumulated as lists and summed in sorted
    /// order, so the result is bit-identical under any row or column
    /// permutation of the input table.
    pub fn reduce(incidence: &RowIncidence, n: usize, self_loops: bool) -> WeightedGraph {
        let mut contributions: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for row in &incidence.rows {
            for (i, &(u, wu)) in row.iter().enumerate() {
                if self_loops {
                    contributions.entry((u, u)).or_default().push(wu * wu);
                }
                for &(v, wv) in &row[i + 1..] {
                    contributions.entry((u, v)).or_default().push(wu * wv);
                }
            }
        }
        let edges = contributions
            .into_iter()
            .filter_map(|(key, mut values)| {
                values.sort_by(f64::total_cmp);
                let weight: f64 = values.iter().sum();
                (weight != 0.0).then_some((key, weight))
            })
            .collect();
        WeightedGraph {
            n,
            edges,
            self_loops,
        }
    }

    /// Build directly from an edge list (tests, fixtures).
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        self_loops: bool,
    ) -> WeightedGraph {
        let edges = edges
            .into_iter()
            .filter(|&(_, _, w)| w != 0.0)
            .map(|(u, v, w)| ((u.min(v), u.max(v)), w))
            .collect();
        WeightedGraph {
            n,
            edges,
            self_loops,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.edges
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    /// Edge list as `u<TAB>v<TAB>weight` lines sorted by `(u, v)`.
    pub fn write_edge_list(&self, mut writer: impl Write) -> Result<()> {
        for (&(u, v), &w) in &self.edges {
            writeln!(writer, "{u}\t{v}\t{w}")?;
        }
        Ok(())
    }

    pub fn edge_list_string(&self) -> String {
        let mut buffer = Vec::new();
        self.write_edge_list(&mut buffer).expect("write to vec");
        String::from_utf8(buffer).expect("utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{BinPolicy, TableSchema};
    use crate::table::parse_reader;

    fn toy_schema() -> TableSchema {
        TableSchema::from_toml_str(
            r#"
[[columns]]
name = "color"
role = "categorical"

[[columns]]
name = "size"
role = "numeric"
bins = { quantile = 2 }
"#,
        )
        .unwrap()
    }

    fn fit_layouts(table: &TypedTable, schema: &TableSchema) -> BTreeMap<String, BinLayout> {
        table
            .numeric
            .iter()
            .map(|(name, col)| {
                let values: Vec<f64> = col.iter().flatten().copied().collect();
                let policy = schema.column(name).unwrap().bins.unwrap();
                (name.clone(), BinLayout::fit(name, &values, policy).unwrap())
            })
            .collect()
    }

    #[test]
    fn catalog_covers_values_and_bins() {
        let schema = toy_schema();
        let csv = "color,size\nred,1\nblue,2\nred,3\nblue,4\nred,5\nblue,6\n";
        let table = parse_reader(csv.as_bytes(), &schema).unwrap();
        let layouts = fit_layouts(&table, &schema);
        let catalog = EntityCatalog::build(&table, &layouts);

        // 2 colors + (2 interior + 2 overflow) bins.
        assert_eq!(catalog.len(), 6);
        assert!(catalog.categorical_id("color", "red").is_some());
        assert!(catalog.categorical_id("color", "green").is_none());
        // Canonical order: columns by name, then values/bins sorted.
        assert_eq!(catalog.entity(0).column, "color");
        assert_eq!(catalog.entity(0).kind, EntityKind::Categorical("blue".into()));
    }

    #[test]
    fn identical_intervals_in_two_columns_stay_distinct_entities() {
        let schema = TableSchema::from_toml_str(
            r#"
[[columns]]
name = "a"
role = "numeric"
bins = { quantile = 1 }

[[columns]]
name = "b"
role = "numeric"
bins = { quantile = 1 }
"#,
        )
        .unwrap();
        let csv = "a,b\n0,0\n10,10\n";
        let table = parse_reader(csv.as_bytes(), &schema).unwrap();
        let layouts = fit_layouts(&table, &schema);
        let catalog = EntityCatalog::build(&table, &layouts);
        assert_eq!(catalog.len(), 6);
        assert_ne!(catalog.bin_id("a", 1), catalog.bin_id("b", 1));
    }

    #[test]
    fn empty_table_gives_empty_catalog() {
        let schema = toy_schema();
        let table = parse_reader("color,size\n".as_bytes(), &schema).unwrap();
        let catalog = EntityCatalog::build(&table, &BTreeMap::new());
        assert!(catalog.is_empty());
    }

    #[test]
    fn incidence_weights_sum_to_one_per_cell() {
        let schema = toy_schema();
        let csv = "color,size\nred,1\nblue,2\nred,3\nblue,4\nred,5\nblue,6\n,3\n";
        let table = parse_reader(csv.as_bytes(), &schema).unwrap();
        let layouts = fit_layouts(&table, &schema);
        let catalog = EntityCatalog::build(&table, &layouts);
        let incidence = RowIncidence::build(&table, &catalog, &layouts).unwrap();

        for (row, pairs) in incidence.rows().iter().enumerate() {
            // Group weights by source column.
            let mut per_column: BTreeMap<&str, f64> = BTreeMap::new();
            for &(id, w) in pairs {
                *per_column
                    .entry(catalog.entity(id).column.as_str())
                    .or_default() += w;
                assert!(w > 0.0 && w <= 1.0);
            }
            assert_eq!(per_column.len(), table.non_missing_cells(row));
            for (_, total) in per_column {
                assert!((total - 1.0).abs() < 1e-12);
            }
            let row_total: f64 = pairs.iter().map(|&(_, w)| w).sum();
            assert!((row_total - table.non_missing_cells(row) as f64).abs() < 1e-12);
        }
        // The last row has a missing color: only the numeric cell remains.
        assert_eq!(incidence.rows()[6].len(), 2); // split across two bins
    }

    #[test]
    fn unknown_categorical_value_errors_on_the_training_path() {
        let schema = toy_schema();
        let csv = "color,size\nred,1\nblue,2\n";
        let table = parse_reader(csv.as_bytes(), &schema).unwrap();
        let layouts = fit_layouts(&table, &schema);
        let catalog = EntityCatalog::build(&table, &layouts);

        let csv2 = "color,size\ngreen,1\n";
        let table2 = parse_reader(csv2.as_bytes(), &schema).unwrap();
        assert!(matches!(
            RowIncidence::build(&table2, &catalog, &layouts),
            Err(Error::UnknownEntity { .. })
        ));
    }

    #[test]
    fn reduce_sums_products_over_rows() {
        // Three rows of two categorical entities with weight 1 each.
        let schema = TableSchema::from_toml_str(
            r#"
[[columns]]
name = "a"
role = "categorical"
[[columns]]
name = "b"
role = "categorical"
"#,
        )
        .unwrap();
        let csv = "a,b\nx,y\nx,y\nx,y\n";
        let table = parse_reader(csv.as_bytes(), &schema).unwrap();
        let catalog = EntityCatalog::build(&table, &BTreeMap::new());
        let incidence = RowIncidence::build(&table, &catalog, &BTreeMap::new()).unwrap();

        let graph = WeightedGraph::reduce(&incidence, catalog.len(), false);
        assert_eq!(graph.edges().len(), 1);
        let (_, &w) = graph.edges().iter().next().unwrap();
        assert_eq!(w, 3.0);

        let with_loops = WeightedGraph::reduce(&incidence, catalog.len(), true);
        assert_eq!(with_loops.edges().len(), 3);
        assert_eq!(with_loops.edges()[&(0, 0)], 3.0);
    }

    #[test]
    fn categorical_numeric_edge_carries_the_membership_weight() {
        let schema = toy_schema();
        // Training values 0 and 10 give one interior bin [0, 10].
        let fit_csv = "color,size\nred,0\nred,10\n";
        let fit_table = parse_reader(fit_csv.as_bytes(), &schema).unwrap();
        let layouts = fit_layouts(&fit_table, &schema);

        // One row with a value leaning low: weight 0.75 on the interior bin.
        let csv = "color,size\nred,2.5\n";
        let table = parse_reader(csv.as_bytes(), &schema).unwrap();
        let catalog = EntityCatalog::build(&fit_table, &layouts);
        let incidence = RowIncidence::build(&table, &catalog, &layouts).unwrap();
        let graph = WeightedGraph::reduce(&incidence, catalog.len(), false);

        let red = catalog.categorical_id("color", "red").unwrap();
        let interior = catalog.bin_id("size", 1).unwrap();
        let underflow = catalog.bin_id("size", 0).unwrap();
        let key = |a: usize, b: usize| (a.min(b), a.max(b));
        assert_eq!(graph.edges()[&key(red, interior)], 0.75);
        assert_eq!(graph.edges()[&key(red, underflow)], 0.25);
        // The two bins of the split cell also co-occur through the row.
        assert_eq!(graph.edges()[&key(interior, underflow)], 0.75 * 0.25);
    }

    #[test]
    fn single_entity_row_yields_only_a_self_loop() {
        let schema = TableSchema::from_toml_str(
            r#"
[[columns]]
name = "a"
role = "categorical"
"#,
        )
        .unwrap();
        let table = parse_reader("a\nx\n".as_bytes(), &schema).unwrap();
        let catalog = EntityCatalog::build(&table, &BTreeMap::new());
        let incidence = RowIncidence::build(&table, &catalog, &BTreeMap::new()).unwrap();

        let plain = WeightedGraph::reduce(&incidence, catalog.len(), false);
        assert!(plain.edges().is_empty());
        let looped = WeightedGraph::reduce(&incidence, catalog.len(), true);
        assert_eq!(looped.edges()[&(0, 0)], 1.0);
    }

    #[test]
    fn edge_list_export_is_sorted_and_tab_separated() {
        let graph = WeightedGraph::from_edges(3, [(2, 1, 0.5), (0, 1, 1.5)], false);
        assert_eq!(graph.edge_list_string(), "0\t1\t1.5\n1\t2\t0.5\n");
    }
}
