#include "cggm/io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cggm/errors.hpp"

namespace cggm {

namespace {

using nlohmann::json;

// Small writer with deterministic formatting; parsing goes through nlohmann.
class JsonWriter {
 public:
  JsonWriter& raw(const std::string& text) {
    out_ += text;
    return *this;
  }
  JsonWriter& key(const std::string& name) {
    comma();
    out_ += '"' + name + "\":";
    fresh_ = true;
    return *this;
  }
  JsonWriter& value(double v) {
    comma();
    out_ += format_double(v);
    return *this;
  }
  JsonWriter& value(int v) {
    comma();
    out_ += std::to_string(v);
    return *this;
  }
  JsonWriter& value(bool v) {
    comma();
    out_ += v ? "true" : "false";
    return *this;
  }
  JsonWriter& value(const std::string& v) {
    comma();
    out_ += json(v).dump();  // proper escaping
    return *this;
  }
  JsonWriter& begin_object() {
    comma();
    out_ += '{';
    fresh_ = true;
    return *this;
  }
  JsonWriter& end_object() {
    out_ += '}';
    fresh_ = false;
    return *this;
  }
  JsonWriter& begin_array() {
    comma();
    out_ += '[';
    fresh_ = true;
    return *this;
  }
  JsonWriter& end_array() {
    out_ += ']';
    fresh_ = false;
    return *this;
  }
  template <typename T>
  JsonWriter& array(const std::vector<T>& values) {
    begin_array();
    for (const T& v : values) value(v);
    return end_array();
  }
  JsonWriter& array(const Eigen::VectorXd& values) {
    begin_array();
    for (Eigen::Index i = 0; i < values.size(); ++i) value(values[i]);
    return end_array();
  }
  JsonWriter& matrix(const Eigen::MatrixXd& M) {
    begin_array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      begin_array();
      for (Eigen::Index j = 0; j < M.cols(); ++j) value(M(i, j));
      end_array();
    }
    return end_array();
  }
  const std::string& str() const { return out_; }

 private:
  void comma() {
    if (!fresh_ && !out_.empty() && out_.back() != '{' && out_.back() != '[' &&
        out_.back() != ':')
      out_ += ',';
    fresh_ = false;
  }
  std::string out_;
  bool fresh_ = true;
};

void write_model_fields(JsonWriter& w, const PrecisionModel& model) {
  w.key("target").value(std::string(
      model.target == EstimationTarget::precision ? "precision" : "covariance"));
  w.key("labels").array(model.assignment.labels);
  w.key("b").array(model.params.b);
  w.key("r").matrix(model.params.R);
}

PrecisionModel model_from_parsed(const json& j) {
  PrecisionModel model;
  const auto labels = j.at("labels").get<std::vector<int>>();
  model.assignment = ClusterAssignment::from_labels(labels);
  if (model.assignment.labels != labels)
    throw InputError("model labels are not in canonical order");
  const auto b = j.at("b").get<std::vector<double>>();
  const int K = model.assignment.K;
  if (static_cast<int>(b.size()) != K)
    throw InputError("diagonal parameter length does not match cluster count");
  model.params.b = Eigen::Map<const Eigen::VectorXd>(b.data(), K);
  model.params.R.resize(K, K);
  const auto& rows = j.at("r");
  if (static_cast<int>(rows.size()) != K)
    throw InputError("block matrix dimension does not match cluster count");
  for (int i = 0; i < K; ++i) {
    const auto row = rows.at(i).get<std::vector<double>>();
    if (static_cast<int>(row.size()) != K)
      throw InputError("block matrix is not square");
    for (int jcol = 0; jcol < K; ++jcol) model.params.R(i, jcol) = row[jcol];
  }
  if (!model.params.R.isApprox(model.params.R.transpose()))
    throw InputError("block matrix is not symmetric");
  if (j.contains("target") && j.at("target") == "covariance")
    model.target = EstimationTarget::covariance;
  return model;
}

void write_merge_log(JsonWriter& w, const std::vector<MergeEvent>& merge_log) {
  w.key("merge_log").begin_array();
  for (const auto& event : merge_log) {
    w.begin_object();
    w.key("iteration").value(event.iteration);
    w.key("cluster_a").value(event.cluster_a);
    w.key("cluster_b").value(event.cluster_b);
    w.key("members_a").array(event.members_a);
    w.key("members_b").array(event.members_b);
    w.end_object();
  }
  w.end_array();
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

DataTable read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  DataTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> tokens;
    std::istringstream fields(line);
    std::string token;
    while (std::getline(fields, token, ',')) tokens.push_back(token);
    if (first) {
      first = false;
      bool numeric = true;
      for (const auto& t : tokens) {
        try {
          std::size_t used = 0;
          std::stod(t, &used);
          if (used != t.size()) numeric = false;
        } catch (...) {
          numeric = false;
        }
      }
      if (!numeric) {
        table.column_names = tokens;
        continue;
      }
    }
    std::vector<double> row;
    row.reserve(tokens.size());
    for (const auto& t : tokens) {
      try {
        row.push_back(std::stod(t));
      } catch (...) {
        throw InputError("non-numeric value '" + t + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("no data rows in " + path);
  table.values.resize(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(i, j) = rows[i][j];
  return table;
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& column_names) {
  std::ostringstream out;
  if (!column_names.empty()) {
    for (std::size_t j = 0; j < column_names.size(); ++j)
      out << (j ? "," : "") << column_names[j];
    out << "\n";
  }
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      out << (j ? "," : "") << format_double(M(i, j));
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
}

std::string model_to_json(const PrecisionModel& model) {
  JsonWriter w;
  w.begin_object();
  write_model_fields(w, model);
  w.end_object();
  return w.str() + "\n";
}

PrecisionModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw InputError(std::string("invalid model JSON: ") + e.what());
  }
  if (j.contains("model")) return model_from_parsed(j.at("model"));
  return model_from_parsed(j);
}

std::string fit_result_to_json(const FitResult& result) {
  JsonWriter w;
  w.begin_object();
  w.key("model").begin_object();
  write_model_fields(w, result.model);
  w.end_object();
  w.key("K").value(result.model.assignment.K);
  w.key("iterations").value(result.iterations);
  w.key("converged").value(result.converged);
  w.key("eps_fusion").value(result.eps_fusion_used);
  w.key("objective_trace").array(result.objective_trace);
  write_merge_log(w, result.merge_log);
  w.end_object();
  return w.str() + "\n";
}

std::string path_to_json(const ClusterpathSolution& path) {
  JsonWriter w;
  w.begin_object();
  w.key("kappa").value(path.kappa);
  w.key("points").begin_array();
  for (const auto& point : path.points) {
    w.begin_object();
    w.key("lambda_c").value(point.lambda_c);
    w.key("gamma_c").value(point.gamma_c);
    w.key("K").value(point.K);
    w.key("objective").value(point.fit.objective_trace.back());
    w.key("labels").array(point.fit.model.assignment.labels);
    w.key("b").array(point.fit.model.params.b);
    w.key("r").matrix(point.fit.model.params.R);
    w.end_object();
  }
  w.end_array();
  w.key("merges").begin_array();
  for (const auto& merge : path.merges) {
    w.begin_object();
    w.key("lambda_c").value(merge.lambda_c);
    w.key("members_a").array(merge.members_a);
    w.key("members_b").array(merge.members_b);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

std::string dendrogram_to_json(const Dendrogram& tree) {
  JsonWriter w;
  w.begin_object();
  w.key("p").value(tree.p);
  w.key("leaves").array(tree.leaf_names);
  w.key("nodes").begin_array();
  for (const auto& node : tree.nodes) {
    w.begin_object();
    w.key("id").value(node.id);
    w.key("children").begin_array();
    w.value(node.child_a);
    w.value(node.child_b);
    w.end_array();
    w.key("height").value(node.height);
    w.key("members").array(node.members);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

std::string cv_result_to_json(const CvResult& result) {
  JsonWriter w;
  w.begin_object();
  auto entry_fields = [&](const CvEntry& entry) {
    w.key("knn").value(entry.knn);
    w.key("phi").value(entry.phi);
    w.key("lambda_s").value(entry.lambda_s);
    w.key("lambda_c").value(entry.lambda_c);
    w.key("mean_score").value(entry.mean_score);
    w.key("folds").value(entry.folds_scored);
  };
  w.key("best").begin_object();
  entry_fields(result.best);
  w.end_object();
  w.key("model").begin_object();
  write_model_fields(w, result.refit_fit.model);
  w.end_object();
  w.key("raw_model").begin_object();
  write_model_fields(w, result.raw_fit.model);
  w.end_object();
  w.key("table").begin_array();
  for (const auto& entry : result.table) {
    w.begin_object();
    entry_fields(entry);
    w.end_object();
  }
  w.end_array();
  w.key("fold_indices").begin_array();
  for (const auto& fold : result.fold_indices) w.array(fold);
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

std::string truth_to_json(const SimulatedData& data, const DesignSpec& spec) {
  JsonWriter w;
  w.begin_object();
  w.key("design").value(design_to_string(spec.name));
  w.key("p").value(spec.p);
  w.key("n").value(spec.n);
  w.key("K").value(spec.K);
  w.key("seed").value(static_cast<int>(spec.seed));
  w.key("target").value(std::string(spec.target == EstimationTarget::precision
                                        ? "precision"
                                        : "covariance"));
  w.key("labels").array(data.labels);
  w.key("matrix").matrix(data.truth);
  w.end_object();
  return w.str() + "\n";
}

std::string eval_report_to_json(const EvalReport& report) {
  JsonWriter w;
  w.begin_object();
  w.key("frobenius").value(report.frobenius);
  w.key("K_hat").value(report.K_hat);
  w.key("ari").value(report.ari);
  w.key("fpr").value(report.fpr);
  w.key("fnr").value(report.fnr);
  w.end_object();
  return w.str() + "\n";
}

std::string study_to_csv(const std::vector<StudyRow>& rows) {
  std::ostringstream out;
  out << "design,replication,method,frobenius,K_hat,ari,fpr,fnr,failed,error\n";
  for (const auto& row : rows) {
    out << row.design << ',' << row.replication << ',' << row.method << ','
        << format_double(row.report.frobenius) << ',' << row.report.K_hat
        << ',' << format_double(row.report.ari) << ','
        << format_double(row.report.fpr) << ','
        << format_double(row.report.fnr) << ',' << (row.failed ? 1 : 0) << ','
        << row.error << "\n";
  }
  return out.str();
}

std::string study_summary_to_json(const std::vector<StudyRow>& rows) {
  struct Stats {
    int n = 0;
    double frobenius = 0, k_hat = 0, ari = 0, fpr = 0, fnr = 0;
  };
  std::map<std::pair<std::string, std::string>, Stats> groups;
  int failures = 0;
  for (const auto& row : rows) {
    if (row.failed) {
      ++failures;
      continue;
    }
    Stats& s = groups[{row.design, row.method}];
    ++s.n;
    s.frobenius += row.report.frobenius;
    s.k_hat += row.report.K_hat;
    s.ari += row.report.ari;
    s.fpr += row.report.fpr;
    s.fnr += row.report.fnr;
  }
  JsonWriter w;
  w.begin_object();
  w.key("failures").value(failures);
  w.key("groups").begin_array();
  for (const auto& [key, s] : groups) {
    w.begin_object();
    w.key("design").value(key.first);
    w.key("method").value(key.second);
    w.key("replications").value(s.n);
    w.key("mean_frobenius").value(s.frobenius / s.n);
    w.key("mean_K_hat").value(s.k_hat / s.n);
    w.key("mean_ari").value(s.ari / s.n);
    w.key("mean_fpr").value(s.fpr / s.n);
    w.key("mean_fnr").value(s.fnr / s.n);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str() + "\n";
}

std::string error_to_json(const std::string& kind, const std::string& message) {
  JsonWriter w;
  w.begin_object();
  w.key("error").value(kind);
  w.key("message").value(message);
  w.end_object();
  return w.str() + "\n";
}

}  // namespace cggm
