#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cggm/clusterpath.hpp"
#include "cggm/model_selection.hpp"
#include "cggm/simulation.hpp"

namespace cggm {

struct DataTable {
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;  // empty when the file has no header
};

// Rows are observations, columns variables; a non-numeric first row is
// treated as a header.
DataTable read_csv_matrix(const std::string& path);
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& column_names = {});

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Serialization uses a fixed layout and 17 significant digits, so re-loading
// and re-saving a document is byte-identical.
std::string model_to_json(const PrecisionModel& model);
PrecisionModel model_from_json(const std::string& text);

std::string fit_result_to_json(const FitResult& result);

std::string path_to_json(const ClusterpathSolution& path);
std::string dendrogram_to_json(const Dendrogram& tree);

std::string cv_result_to_json(const CvResult& result);

std::string eval_report_to_json(const EvalReport& report);
std::string truth_to_json(const SimulatedData& data, const DesignSpec& spec);
std::string study_to_csv(const std::vector<StudyRow>& rows);
std::string study_summary_to_json(const std::vector<StudyRow>& rows);

std::string error_to_json(const std::string& kind, const std::string& message);

std::string format_double(double value);  // shared %.17g formatting

}  // namespace cggm
