#include "metricforge/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace metricforge {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw IoError(path + ": bad numeric field '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw IoError(path + ": bad integer field '" + s + "'");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_dataset_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out = open_out(path);
  out << "id,label";
  for (Eigen::Index k = 0; k < dataset.dim(); ++k) out << ",f" << k;
  out << "\n";
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    out << i << "," << dataset.labels[i];
    for (Eigen::Index k = 0; k < dataset.dim(); ++k)
      out << "," << format_double(dataset.features(i, k));
    out << "\n";
  }
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw IoError(path + ": expected header id,label,f0..");
  const int dim = static_cast<int>(header.size()) - 2;
  for (int k = 0; k < dim; ++k)
    if (header[k + 2] != "f" + std::to_string(k))
      throw IoError(path + ": bad feature column name " + header[k + 2]);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != dim + 2)
      throw IoError(path + ": wrong field count in row " +
                    std::to_string(rows.size()));
    labels.push_back(static_cast<int>(parse_long(fields[1], path)));
    std::vector<double> row(dim);
    for (int k = 0; k < dim; ++k) row[k] = parse_double(fields[k + 2], path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");

  Dataset dataset;
  dataset.features.resize(rows.size(), dim);
  dataset.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dataset.labels[static_cast<Eigen::Index>(i)] = labels[i];
    for (int k = 0; k < dim; ++k)
      dataset.features(static_cast<Eigen::Index>(i), k) = rows[i][k];
  }
  return dataset;
}

void write_embeddings_csv(const std::string& path, const Matrix& embeddings,
                          const IntVector& labels) {
  if (embeddings.rows() != labels.size())
    throw DimensionMismatchError("write_embeddings_csv: label count mismatch");
  Dataset view;
  view.features = embeddings;
  view.labels = labels;
  write_dataset_csv(path, view);
}

void write_label_table_csv(const std::string& path,
                           const LabelEmbeddingTable& table) {
  if (table.vectors.empty())
    throw EmptyInputError("write_label_table_csv: empty table");
  std::ofstream out = open_out(path);
  const Eigen::Index dim = table.vectors.begin()->second.size();
  out << "label";
  for (Eigen::Index k = 0; k < dim; ++k) out << ",e" << k;
  out << "\n";
  for (const auto& [label, v] : table.vectors) {
    if (v.size() != dim)
      throw DimensionMismatchError("write_label_table_csv: ragged table");
    out << label;
    for (Eigen::Index k = 0; k < dim; ++k) out << "," << format_double(v[k]);
    out << "\n";
  }
}

LabelEmbeddingTable read_label_table_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "label")
    throw IoError(path + ": expected header label,e0..");
  const int dim = static_cast<int>(header.size()) - 1;
  for (int k = 0; k < dim; ++k)
    if (header[k + 1] != "e" + std::to_string(k))
      throw IoError(path + ": bad embedding column name " + header[k + 1]);

  LabelEmbeddingTable table;
  table.source = path;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != dim + 1)
      throw IoError(path + ": wrong field count");
    const int label = static_cast<int>(parse_long(fields[0], path));
    Vector v(dim);
    for (int k = 0; k < dim; ++k) v[k] = parse_double(fields[k + 1], path);
    if (v.norm() <= kNormEpsilon)
      throw IoError(path + ": zero vector for label " + std::to_string(label));
    table.vectors[label] = std::move(v);
  }
  if (table.vectors.empty()) throw IoError(path + ": no entries");
  return table;
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,mean_loss,recall_at_1,intra_inter_gap\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << "," << format_double(r.mean_loss) << ","
        << format_double(r.recall_at_1) << ","
        << format_double(r.intra_inter_gap) << "\n";
  }
  return out.str();
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history) {
  std::ofstream out = open_out(path);
  out << history_to_csv(history);
}

std::string report_to_json(const RetrievalReport& report) {
  nlohmann::json j;
  nlohmann::json recalls = nlohmann::json::object();
  for (const auto& [k, v] : report.recall_at_k)
    recalls[std::to_string(k)] = v;
  j["recall_at_k"] = recalls;
  j["mean_intra_cos"] = report.mean_intra_cos;
  j["mean_inter_cos"] = report.mean_inter_cos;
  j["separation_gap"] = report.separation_gap;
  return j.dump(2) + "\n";
}

void write_report_json(const std::string& path,
                       const RetrievalReport& report) {
  std::ofstream out = open_out(path);
  out << report_to_json(report);
}

}  // namespace metricforge
