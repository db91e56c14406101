#include "mixse/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mixse {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

std::string dirname_of(const std::string& path) {
  auto pos = path.find_last_of('/');
  return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

void write_doubles(std::ofstream& out, const double* p, size_t count) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, size_t count) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
  require(static_cast<size_t>(in.gcount()) == count * sizeof(double),
          "binary payload truncated");
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path);
  out << "label";
  for (int j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << "\n";
  out.precision(17);
  for (int i = 0; i < data.n(); ++i) {
    if (data.label_dim() == 1) {
      out << (data.Y(i, 0) > 0 ? 1 : -1);
    } else {
      int k = 0;
      data.Y.row(i).maxCoeff(&k);
      out << k;
    }
    for (int j = 0; j < data.dim(); ++j) out << ',' << data.X(i, j);
    out << "\n";
  }
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty csv");

  // header: locate the label column
  int label_col = -1, ncols = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "label") label_col = ncols;
      ++ncols;
    }
  }
  require(label_col >= 0, "csv: no column named 'label'");
  const int d = ncols - 1;

  std::vector<double> labels;
  std::vector<double> feats;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      double v = std::stod(cell);
      if (col == label_col)
        labels.push_back(v);
      else
        feats.push_back(v);
      ++col;
    }
    require(col == ncols, "csv: ragged row");
  }
  const int n = static_cast<int>(labels.size());
  require(n > 0, "csv: no data rows");

  Dataset ds;
  ds.X.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.X(i, j) = feats[static_cast<size_t>(i) * d + j];

  bool pm1 = true;
  for (double v : labels)
    if (v != 1.0 && v != -1.0) pm1 = false;
  if (pm1) {
    ds.Y.resize(n, 1);
    for (int i = 0; i < n; ++i) ds.Y(i, 0) = labels[i];
  } else {
    int K = 0;
    for (double v : labels) {
      require(v == std::floor(v) && v >= 0, "csv: labels must be +-1 or class indices");
      K = std::max(K, static_cast<int>(v) + 1);
    }
    ds.Y = Mat::Zero(n, K);
    for (int i = 0; i < n; ++i) ds.Y(i, static_cast<int>(labels[i])) = 1.0;
  }
  return ds;
}

void write_dataset_binary(const std::string& descriptor_path, const Dataset& data) {
  require(descriptor_path.size() > 5 &&
              descriptor_path.substr(descriptor_path.size() - 5) == ".json",
          "descriptor must end in .json");
  std::string bin_path = descriptor_path.substr(0, descriptor_path.size() - 5) + ".bin";

  nlohmann::json desc;
  desc["n"] = data.n();
  desc["d"] = data.dim();
  desc["label_encoding"] =
      data.label_dim() == 1 ? "pm1" : ("onehot:" + std::to_string(data.label_dim()));
  auto pos = bin_path.find_last_of('/');
  desc["data_file"] = pos == std::string::npos ? bin_path : bin_path.substr(pos + 1);
  std::ofstream dj(descriptor_path);
  require(dj.good(), "cannot open " + descriptor_path);
  dj << desc.dump(2) << "\n";

  std::ofstream out(bin_path, std::ios::binary);
  require(out.good(), "cannot open " + bin_path);
  Mat Yt = data.Y;  // ensure row-major order on disk
  for (int i = 0; i < data.n(); ++i) {
    Vec row = Yt.row(i).transpose();
    write_doubles(out, row.data(), static_cast<size_t>(row.size()));
  }
  for (int i = 0; i < data.n(); ++i) {
    Vec row = data.X.row(i).transpose();
    write_doubles(out, row.data(), static_cast<size_t>(row.size()));
  }
}

Dataset read_dataset_binary(const std::string& descriptor_path) {
  std::ifstream dj(descriptor_path);
  require(dj.good(), "cannot open " + descriptor_path);
  nlohmann::json desc = nlohmann::json::parse(dj);
  const int n = desc.at("n").get<int>();
  const int d = desc.at("d").get<int>();
  std::string enc = desc.at("label_encoding").get<std::string>();
  int L = 1;
  if (enc != "pm1") {
    require(enc.rfind("onehot:", 0) == 0, "unknown label_encoding " + enc);
    L = std::stoi(enc.substr(7));
  }
  std::string bin_path = dirname_of(descriptor_path) + "/" + desc.at("data_file").get<std::string>();

  std::ifstream in(bin_path, std::ios::binary);
  require(in.good(), "cannot open " + bin_path);
  Dataset ds;
  ds.Y.resize(n, L);
  ds.X.resize(n, d);
  std::vector<double> row(static_cast<size_t>(std::max(L, d)));
  for (int i = 0; i < n; ++i) {
    read_doubles(in, row.data(), static_cast<size_t>(L));
    for (int j = 0; j < L; ++j) ds.Y(i, j) = row[static_cast<size_t>(j)];
  }
  for (int i = 0; i < n; ++i) {
    read_doubles(in, row.data(), static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) ds.X(i, j) = row[static_cast<size_t>(j)];
  }
  return ds;
}

Dataset read_dataset(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
    return read_dataset_binary(path);
  return read_dataset_csv(path);
}

void write_model(const std::string& path, const MixtureModel& model) {
  nlohmann::json head;
  head["K"] = model.K;
  head["d"] = model.dim();
  head["L"] = model.L;
  head["priors"] = std::vector<double>(model.priors.data(), model.priors.data() + model.K);
  std::vector<std::vector<double>> codes;
  for (const Vec& c : model.label_codes)
    codes.emplace_back(c.data(), c.data() + c.size());
  head["label_codes"] = codes;

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path);
  out << head.dump() << "\n";
  for (const Vec& mu : model.means) write_doubles(out, mu.data(), static_cast<size_t>(mu.size()));
  for (const Mat& S : model.covariances) {
    Mat St = S.transpose();  // row-major payload
    write_doubles(out, St.data(), static_cast<size_t>(St.size()));
  }
}

MixtureModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), "model file truncated");
  nlohmann::json head = nlohmann::json::parse(header);
  const int K = head.at("K").get<int>();
  const int d = head.at("d").get<int>();
  const int L = head.at("L").get<int>();

  std::vector<Vec> means(K, Vec(d));
  for (int k = 0; k < K; ++k) read_doubles(in, means[k].data(), static_cast<size_t>(d));
  std::vector<Mat> covs(K);
  for (int k = 0; k < K; ++k) {
    Mat St(d, d);
    read_doubles(in, St.data(), static_cast<size_t>(d) * d);
    covs[k] = St.transpose();
  }
  Vec priors(K);
  auto pv = head.at("priors").get<std::vector<double>>();
  for (int k = 0; k < K; ++k) priors(k) = pv[static_cast<size_t>(k)];
  std::vector<Vec> codes;
  for (const auto& c : head.at("label_codes")) {
    auto cv = c.get<std::vector<double>>();
    codes.push_back(Eigen::Map<Vec>(cv.data(), static_cast<Eigen::Index>(cv.size())));
  }
  require(static_cast<int>(codes[0].size()) == L, "model header inconsistent");
  return MixtureModel::make(std::move(means), std::move(covs), std::move(priors),
                            std::move(codes));
}

}  // namespace mixse
