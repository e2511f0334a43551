#include "icsurv/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace icsurv {

namespace fs = std::filesystem;

namespace {

struct CsvTable {
  std::string file;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  CsvTable table;
  table.file = path.filename().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw InvalidInput(table.file + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(table.header.size()) + " fields, got " +
                         std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  if (table.header.empty()) throw InvalidInput(table.file + ": missing header");
  return table;
}

std::string where(const CsvTable& t, std::size_t row) {
  return t.file + ":" + std::to_string(t.line_numbers[row]) + ": ";
}

double parse_double(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw InvalidInput(where(t, row) + "malformed number '" + s + "' in column " + t.header[col]);
  return v;
}

int parse_flag(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw InvalidInput(where(t, row) + "column " + t.header[col] + " must be 0 or 1, got '" + s + "'");
}

std::size_t column(const CsvTable& t, const std::string& name, bool required = true) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) {
    if (required) throw InvalidInput(t.file + ": missing column '" + name + "'");
    return static_cast<std::size_t>(-1);
  }
  return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Dataset load_dataset(const fs::path& subjects_file, const fs::path& visits_file,
                     const fs::path& covariates_file) {
  const CsvTable st = read_csv(subjects_file);
  const CsvTable vt = read_csv(visits_file);
  const CsvTable ct = read_csv(covariates_file);

  const std::size_t c_id = column(st, "id"), c_y = column(st, "y"), c_delta = column(st, "delta");
  const std::size_t c_g = column(st, "autopsy_done", false);
  const std::size_t c_w = column(st, "autopsy_positive", false);

  std::vector<Subject> subjects;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < st.rows.size(); ++r) {
    Subject s;
    s.id = st.rows[r][c_id];
    if (s.id.empty()) throw InvalidInput(where(st, r) + "empty id");
    if (!index.emplace(s.id, subjects.size()).second)
      throw InvalidInput(where(st, r) + "duplicate subject id '" + s.id + "'");
    s.y = parse_double(st, r, c_y);
    s.delta = parse_flag(st, r, c_delta);
    s.autopsy_done = c_g == static_cast<std::size_t>(-1) ? 0 : parse_flag(st, r, c_g);
    s.autopsy_positive = c_w == static_cast<std::size_t>(-1) ? 0 : parse_flag(st, r, c_w);
    if (s.delta == 0 && s.autopsy_done == 1)
      throw InvalidInput(where(st, r) + "subject '" + s.id + "': autopsy_done=1 requires delta=1");
    if (s.autopsy_done == 0 && s.autopsy_positive == 1)
      throw InvalidInput(where(st, r) + "subject '" + s.id + "': autopsy_positive=1 requires autopsy_done=1");
    subjects.push_back(std::move(s));
  }

  auto lookup = [&](const CsvTable& t, std::size_t r, std::size_t col) -> Subject& {
    auto it = index.find(t.rows[r][col]);
    if (it == index.end())
      throw InvalidInput(where(t, r) + "unknown subject id '" + t.rows[r][col] + "'");
    return subjects[it->second];
  };

  const std::size_t v_id = column(vt, "id"), v_t = column(vt, "time"), v_xi = column(vt, "xi");
  for (std::size_t r = 0; r < vt.rows.size(); ++r) {
    Subject& s = lookup(vt, r, v_id);
    const double t = parse_double(vt, r, v_t);
    const int xi = parse_flag(vt, r, v_xi);
    if (!s.monitor_times.empty() && !(t > s.monitor_times.back()))
      throw InvalidInput(where(vt, r) + "subject '" + s.id + "': visit times not strictly ascending");
    if (t > s.y)
      throw InvalidInput(where(vt, r) + "subject '" + s.id + "': visit at " + vt.rows[r][v_t] +
                         " after follow-up time y");
    s.monitor_times.push_back(t);
    s.diagnoses.push_back(xi);
  }

  const std::size_t k_id = column(ct, "id"), k_t = column(ct, "time");
  std::vector<std::size_t> xcols;
  for (std::size_t c = 0; c < ct.header.size(); ++c)
    if (c != k_id && c != k_t) xcols.push_back(c);
  if (xcols.empty()) throw InvalidInput(ct.file + ": no covariate columns");
  const std::size_t d = xcols.size();
  std::vector<std::vector<double>> times(subjects.size()), values(subjects.size());
  for (std::size_t r = 0; r < ct.rows.size(); ++r) {
    auto it = index.find(ct.rows[r][k_id]);
    if (it == index.end())
      throw InvalidInput(where(ct, r) + "unknown subject id '" + ct.rows[r][k_id] + "'");
    const std::size_t i = it->second;
    const double t = parse_double(ct, r, k_t);
    if (times[i].empty() && t != 0.0)
      throw InvalidInput(where(ct, r) + "subject '" + subjects[i].id +
                         "': first covariate measurement must be at time 0");
    if (!times[i].empty() && !(t > times[i].back()))
      throw InvalidInput(where(ct, r) + "subject '" + subjects[i].id +
                         "': covariate times not strictly ascending");
    times[i].push_back(t);
    for (std::size_t c : xcols) values[i].push_back(parse_double(ct, r, c));
  }
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (times[i].empty())
      throw InvalidInput(covariates_file.filename().string() + ": subject '" + subjects[i].id +
                         "' has no covariate rows");
    subjects[i].covariates = CovariatePath::tabulated(std::move(times[i]), std::move(values[i]), d);
  }
  return Dataset(std::move(subjects));
}

Dataset load_dataset(const fs::path& dir) {
  return load_dataset(dir / kSubjectsFile, dir / kVisitsFile, dir / kCovariatesFile);
}

void write_dataset(const Dataset& data, const fs::path& dir, const std::string& header,
                   double analytic_grid_step) {
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw InvalidInput("cannot write " + (dir / name).string());
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) out << "# " << line << '\n';
    return out;
  };
  std::ofstream so = open(kSubjectsFile);
  std::ofstream vo = open(kVisitsFile);
  std::ofstream co = open(kCovariatesFile);
  so << "id,y,delta,autopsy_done,autopsy_positive\n";
  vo << "id,time,xi\n";
  co << "id,time";
  for (std::size_t c = 0; c < data.dim(); ++c) co << ",x" << (c + 1);
  co << '\n';
  for (const Subject& s : data.subjects()) {
    so << s.id << ',' << format_double(s.y) << ',' << s.delta << ',' << s.autopsy_done << ','
       << s.autopsy_positive << '\n';
    for (std::size_t j = 0; j < s.n_visits(); ++j)
      vo << s.id << ',' << format_double(s.monitor_times[j]) << ',' << s.diagnoses[j] << '\n';
    CovariatePath path = s.covariates;
    if (!path.is_tabulated()) {
      std::vector<double> grid;
      for (std::size_t k = 0; k * analytic_grid_step < s.y; ++k) grid.push_back(k * analytic_grid_step);
      grid.insert(grid.end(), s.monitor_times.begin(), s.monitor_times.end());
      grid.push_back(s.y);
      std::sort(grid.begin(), grid.end());
      grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
      path = path.tabulate(grid);
    }
    const std::size_t d = path.dim();
    for (std::size_t k = 0; k < path.times().size(); ++k) {
      co << s.id << ',' << format_double(path.times()[k]);
      for (std::size_t c = 0; c < d; ++c) co << ',' << format_double(path.values()[k * d + c]);
      co << '\n';
    }
  }
}

}  // namespace icsurv
