#pragma once

#include <string>

#include "mixse/mixture.hpp"

namespace mixse {

/// CSV with a header; the label column is named `label`. Scalar labels are
/// written as +-1, one-hot labels as the class index.
void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

/// Raw little-endian f64 payload (Y block then X block, row-major) next to a
/// JSON descriptor {n, d, label_encoding, data_file}.
void write_dataset_binary(const std::string& descriptor_path, const Dataset& data);
Dataset read_dataset_binary(const std::string& descriptor_path);

/// Reads either format, keyed on the file extension (.csv vs .json).
Dataset read_dataset(const std::string& path);

/// Empirical-model file: one-line JSON header {K, d, L, priors, label_codes}
/// followed by the raw little-endian f64 payload mu_1..mu_K, Sigma_1..Sigma_K.
void write_model(const std::string& path, const MixtureModel& model);
MixtureModel read_model(const std::string& path);

}  // namespace mixse
