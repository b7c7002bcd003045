#include "lungpipe/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lungpipe/core/rng.hpp"
#include "lungpipe/img/roi.hpp"

namespace lp::pipeline {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double num(const std::string& v, const std::string& key) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ValueError("config: bad number '" + v + "' for key '" + key + "'");
    return out;
}

int64_t integer(const std::string& v, const std::string& key) {
    const double d = num(v, key);
    const auto i = static_cast<int64_t>(d);
    if (static_cast<double>(i) != d)
        throw ValueError("config: key '" + key + "' wants an integer, got '" + v + "'");
    return i;
}

bool flag(const std::string& v, const std::string& key) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ValueError("config: key '" + key + "' wants on/off, got '" + v + "'");
}

std::vector<int64_t> int_list(const std::string& v, const std::string& key) {
    std::vector<int64_t> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) out.push_back(integer(trim(cur), key));
    if (out.empty()) throw ValueError("config: key '" + key + "' wants a comma list");
    return out;
}

template <size_t N>
std::array<int64_t, N> int_array(const std::string& v, const std::string& key) {
    const auto list = int_list(v, key);
    if (list.size() != N)
        throw ValueError("config: key '" + key + "' wants exactly " + std::to_string(N) +
                         " comma-separated values");
    std::array<int64_t, N> out{};
    std::copy(list.begin(), list.end(), out.begin());
    return out;
}

std::string join(const std::vector<int64_t>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

template <size_t N>
std::string join(const std::array<int64_t, N>& v) {
    return join(std::vector<int64_t>(v.begin(), v.end()));
}

// shortest decimal text that round-trips the double
std::string num_str(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    for (int prec = 1; prec < 17; ++prec) {
        std::ostringstream t;
        t << std::setprecision(prec) << v;
        if (std::stod(t.str()) == v) return t.str();
    }
    return os.str();
}

}  // namespace

PipelineConfig::PipelineConfig() {
    // desk-scale defaults: the whole pipeline trains on a CPU
    seg.input_hw = 128;
    seg.widths = {16, 32, 64};
    seg.bridge = 128;
    seg.epochs = 60;
    seg.batch_size = 4;
    recur.filters = {8, 16, 32, 64};
    recur.dense = {256, 128, 64, 2};
    recur.epochs = 80;
    recur.batch_size = 4;
    recur.input_size = img::kRoiSize;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    if (key == "seed") {
        seed = static_cast<uint64_t>(integer(value, key));
    } else if (key == "data.root") {
        data_root = value;
    } else if (key == "data.out") {
        out_dir = value;
    } else if (key == "hu.low") {
        hu_low = num(value, key);
    } else if (key == "hu.high") {
        hu_high = num(value, key);
    } else if (key == "split.train") {
        split[0] = num(value, key);
    } else if (key == "split.val") {
        split[1] = num(value, key);
    } else if (key == "split.test") {
        split[2] = num(value, key);
    } else if (key == "seg.input_hw") {
        seg.input_hw = integer(value, key);
    } else if (key == "seg.width") {
        const int64_t w = integer(value, key);
        if (w < 1) throw ValueError("config: seg.width must be positive");
        seg.widths = {w, 2 * w, 4 * w};
        seg.bridge = 8 * w;
    } else if (key == "seg.pos_weight") {
        seg.pos_weight = num(value, key);
    } else if (key == "seg.lr") {
        seg.lr = num(value, key);
    } else if (key == "seg.epochs") {
        seg.epochs = integer(value, key);
    } else if (key == "seg.batch_size") {
        seg.batch_size = integer(value, key);
    } else if (key == "seg.augment") {
        seg_augment = flag(value, key);
    } else if (key == "recur.filters") {
        recur.filters = int_array<4>(value, key);
    } else if (key == "recur.dense") {
        recur.dense = int_array<4>(value, key);
    } else if (key == "recur.pos_weight") {
        recur.pos_weight = num(value, key);
    } else if (key == "recur.lr") {
        recur.lr = num(value, key);
    } else if (key == "recur.dropout") {
        recur.dropout = num(value, key);
    } else if (key == "recur.epochs") {
        recur.epochs = integer(value, key);
    } else if (key == "recur.batch_size") {
        recur.batch_size = integer(value, key);
    } else if (key == "recur.augment") {
        recur_augment = flag(value, key);
    } else if (key == "forest.estimators") {
        forest_estimators = int_list(value, key);
    } else if (key == "forest.depths") {
        forest_depths = int_list(value, key);
    } else if (key == "forest.folds") {
        forest_folds = integer(value, key);
    } else if (key == "phantom.patients") {
        phantom_patients = integer(value, key);
    } else if (key == "phantom.dims") {
        phantom.dims = int_array<3>(value, key);
    } else if (key == "phantom.noise_hu") {
        phantom.noise_hu = num(value, key);
    } else if (key == "phantom.min_radius_mm") {
        phantom.min_radius_mm = num(value, key);
    } else if (key == "phantom.max_radius_mm") {
        phantom.max_radius_mm = num(value, key);
    } else if (key == "phantom.max_nodules") {
        phantom.max_nodules = integer(value, key);
    } else if (key == "phantom.diameter_coeff") {
        phantom.diameter_coeff = num(value, key);
    } else if (key == "phantom.stage_coeff") {
        phantom.stage_coeff = num(value, key);
    } else if (key == "phantom.stage_noise") {
        phantom.stage_noise = num(value, key);
    } else if (key == "phantom.base_rate") {
        phantom.base_rate = num(value, key);
    } else {
        throw ValueError("config: unknown key '" + key + "'");
    }
}

void PipelineConfig::finalize() {
    if (!(hu_low < hu_high)) throw ValueError("config: hu window is degenerate");
    if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9)
        throw ValueError("config: split ratios must sum to 1");
    for (double r : split)
        if (r < 0) throw ValueError("config: negative split ratio");
    if (forest_folds < 2) throw ValueError("config: forest.folds must be at least 2");
    if (forest_estimators.empty() || forest_depths.empty())
        throw ValueError("config: empty forest grid");
    for (int64_t n : forest_estimators)
        if (n < 1) throw ValueError("config: forest.estimators must be positive");
    for (int64_t d : forest_depths)
        if (d < 0) throw ValueError("config: forest.depths must be >= 0 (0 = unbounded)");
    if (phantom_patients < 1) throw ValueError("config: phantom.patients must be positive");

    recur.input_size = img::kRoiSize;  // pinned by the ROI contract
    seg.validate();
    recur.validate();
    phantom.validate();

    // one root seed fans out; the tags keep the streams apart
    seg.seed = splitmix64(seed ^ 0xa1);
    recur.seed = splitmix64(seed ^ 0xa2);
    phantom.seed = seed;
    if (!seg_augment) seg.augment = nn::AugmentationConfig::identity();
    if (!recur_augment) recur.augment = nn::AugmentationConfig::identity();
}

std::vector<forest::ForestParams> PipelineConfig::forest_grid() const {
    std::vector<forest::ForestParams> grid;
    for (int64_t n : forest_estimators)
        for (int64_t d : forest_depths) grid.push_back({n, d, false});
    return grid;
}

void load_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ValueError("config: line " + std::to_string(line_no) +
                             " is not 'key = value': " + path);
        cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
}

void write_config_echo(std::ostream& os, const PipelineConfig& cfg) {
    os << "seed = " << cfg.seed << "\n";
    os << "data.root = " << cfg.data_root << "\n";
    os << "data.out = " << cfg.out_dir << "\n";
    os << "hu.low = " << num_str(cfg.hu_low) << "\n";
    os << "hu.high = " << num_str(cfg.hu_high) << "\n";
    os << "split.train = " << num_str(cfg.split[0]) << "\n";
    os << "split.val = " << num_str(cfg.split[1]) << "\n";
    os << "split.test = " << num_str(cfg.split[2]) << "\n";
    os << "seg.input_hw = " << cfg.seg.input_hw << "\n";
    os << "seg.width = " << cfg.seg.widths[0] << "\n";
    os << "seg.pos_weight = " << num_str(cfg.seg.pos_weight) << "\n";
    os << "seg.lr = " << num_str(cfg.seg.lr) << "\n";
    os << "seg.epochs = " << cfg.seg.epochs << "\n";
    os << "seg.batch_size = " << cfg.seg.batch_size << "\n";
    os << "seg.augment = " << (cfg.seg_augment ? "on" : "off") << "\n";
    os << "recur.filters = " << join(cfg.recur.filters) << "\n";
    os << "recur.dense = " << join(cfg.recur.dense) << "\n";
    os << "recur.pos_weight = " << num_str(cfg.recur.pos_weight) << "\n";
    os << "recur.lr = " << num_str(cfg.recur.lr) << "\n";
    os << "recur.dropout = " << num_str(cfg.recur.dropout) << "\n";
    os << "recur.epochs = " << cfg.recur.epochs << "\n";
    os << "recur.batch_size = " << cfg.recur.batch_size << "\n";
    os << "recur.augment = " << (cfg.recur_augment ? "on" : "off") << "\n";
    os << "forest.estimators = " << join(cfg.forest_estimators) << "\n";
    os << "forest.depths = " << join(cfg.forest_depths) << "\n";
    os << "forest.folds = " << cfg.forest_folds << "\n";
    os << "phantom.patients = " << cfg.phantom_patients << "\n";
    os << "phantom.dims = " << join(cfg.phantom.dims) << "\n";
    os << "phantom.noise_hu = " << num_str(cfg.phantom.noise_hu) << "\n";
    os << "phantom.min_radius_mm = " << num_str(cfg.phantom.min_radius_mm) << "\n";
    os << "phantom.max_radius_mm = " << num_str(cfg.phantom.max_radius_mm) << "\n";
    os << "phantom.max_nodules = " << cfg.phantom.max_nodules << "\n";
    os << "phantom.diameter_coeff = " << num_str(cfg.phantom.diameter_coeff) << "\n";
    os << "phantom.stage_coeff = " << num_str(cfg.phantom.stage_coeff) << "\n";
    os << "phantom.stage_noise = " << num_str(cfg.phantom.stage_noise) << "\n";
    os << "phantom.base_rate = " << num_str(cfg.phantom.base_rate) << "\n";
}

}  // namespace lp::pipeline
