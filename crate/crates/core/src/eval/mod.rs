//! Evaluation: classifier validation of sampled groups, log-likelihood
//! separation, similarity-score distributions and PCA projections.

mod classifier;
mod llsep;
mod pca;
mod report;
mod scores;

pub use classifier::{train_softmax_classifier, ConfusionMatrix, SoftmaxClassifier, SoftmaxConfig};
pub use llsep::{ll_separation, LlRow, LlSeparationReport};
pub use pca::{pca_project, PcaProjection};
pub use report::{
    report_file_name, write_confusion_csv, write_histogram_svg, write_llsep_csv, write_projection_csv, write_scatter_svg,
    write_scores_csv,
};
pub use scores::{
    cosine_similarity_score, histogram_intersection, score_distribution, ScoreDistribution, ScoreMode, DEFAULT_BINS,
    SCORE_MAX, SCORE_MIN,
};
