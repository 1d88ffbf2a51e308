#pragma once

#include <string>
#include <vector>

#include "metricforge/eval.hpp"
#include "metricforge/regularizers.hpp"
#include "metricforge/trainer.hpp"
#include "metricforge/types.hpp"

namespace metricforge {

// Doubles are written with 17 significant digits so every file round-trips
// bit-exactly.
std::string format_double(double v);

// Dataset CSV: header "id,label,f0..f{D-1}", one row per sample.
void write_dataset_csv(const std::string& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::string& path);

// Final embeddings use the same layout with the embedding dimension.
void write_embeddings_csv(const std::string& path, const Matrix& embeddings,
                          const IntVector& labels);

// Label-embedding table CSV: header "label,e0..e{d-1}".
void write_label_table_csv(const std::string& path,
                           const LabelEmbeddingTable& table);
LabelEmbeddingTable read_label_table_csv(const std::string& path);

// Training history CSV: "epoch,mean_loss,recall_at_1,intra_inter_gap".
void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history);
std::string history_to_csv(const std::vector<EpochRecord>& history);

std::string report_to_json(const RetrievalReport& report);
void write_report_json(const std::string& path, const RetrievalReport& report);

}  // namespace metricforge
