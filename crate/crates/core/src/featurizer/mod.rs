//! Composition featurization and feature scaling.

mod cache;
mod composition;
mod formula;
mod records;
mod scaler;
mod select;
mod table;

pub use cache::FeatureMatrix;
pub use composition::{composition_features, feature_names, STATISTICS};
pub use records::featurize_records;
pub use formula::{is_element, parse_formula, CompositionMap, ELEMENT_SYMBOLS};
pub use scaler::{
    default_nan_fill, fit_scaler, fit_scaler_with_fill, transform, transform_columns, ColumnStats,
    ColumnStatus, ScalerKind, ScalerState,
};
pub use select::{normalized_mutual_information, top_k_by_nmi};
pub use table::ElementTable;
