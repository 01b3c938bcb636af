#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "abscam/model.hpp"

namespace abscam::model {

// Weights file layout (all integers uint32 little-endian unless noted):
//   "ABSCAMW1"  nominal_h  nominal_w  len model_id  layer_count
//   per layer:  kind  len name  in_channels out_channels kernel stride padding
//               in_features out_features relu
//               [parameterized only] dtype(4|8) n_weight weight[] n_bias bias[]
// dtype 4 stores IEEE float32, 8 stores float64.

namespace {

constexpr char kMagic[8] = {'A', 'B', 'S', 'C', 'A', 'M', 'W', '1'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) bytes_.push_back(static_cast<char>(v >> (8 * b)));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void f64s(const std::vector<double>& v) {
        u32(static_cast<std::uint32_t>(v.size()));
        for (double d : v) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, 8);
            for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>(bits >> (8 * b)));
        }
    }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class Reader {
public:
    Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        pos_ += 4;
        return v;
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> values(std::uint32_t dtype) {
        const auto n = u32();
        std::vector<double> v(n);
        if (dtype == 8) {
            need(static_cast<std::size_t>(n) * 8);
            for (auto& d : v) {
                std::uint64_t bits = 0;
                for (int b = 0; b < 8; ++b)
                    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
                std::memcpy(&d, &bits, 8);
                pos_ += 8;
            }
        } else if (dtype == 4) {
            need(static_cast<std::size_t>(n) * 4);
            for (auto& d : v) {
                const std::uint32_t bits = u32();
                float f;
                std::memcpy(&f, &bits, 4);
                d = f;
            }
        } else {
            fail("unsupported dtype " + std::to_string(dtype));
        }
        return v;
    }
    void expect_magic() {
        need(8);
        if (std::memcmp(bytes_.data(), kMagic, 8) != 0) fail("bad magic");
        pos_ = 8;
    }
    bool at_end() const { return pos_ == bytes_.size(); }
    [[noreturn]] void fail(const std::string& what) const {
        throw IngestionError("weights file " + source_ + ": " + what);
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) fail("truncated");
    }

    std::vector<char> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

} // namespace

void save_weights(const Classifier& model, const std::filesystem::path& path) {
    Writer w;
    w.raw(kMagic, 8);
    w.u32(static_cast<std::uint32_t>(model.nominal_height()));
    w.u32(static_cast<std::uint32_t>(model.nominal_width()));
    w.str(model.model_id());
    w.u32(static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& L : model.layers()) {
        w.u32(static_cast<std::uint32_t>(L.kind));
        w.str(L.name);
        for (int v : {L.in_channels, L.out_channels, L.kernel, L.stride, L.padding, L.in_features, L.out_features})
            w.u32(static_cast<std::uint32_t>(v));
        w.u32(L.relu ? 1u : 0u);
        if (L.has_parameters()) {
            w.u32(8);
            w.f64s(L.params->weight);
            w.f64s(L.params->bias);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

Classifier load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open weights file " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path.string());
    r.expect_magic();
    const int nh = static_cast<int>(r.u32());
    const int nw = static_cast<int>(r.u32());
    std::string id = r.str();
    const auto count = r.u32();
    std::vector<Layer> layers;
    for (std::uint32_t n = 0; n < count; ++n) {
        Layer L;
        const auto kind = r.u32();
        if (kind > static_cast<std::uint32_t>(LayerKind::Linear)) r.fail("unknown layer kind");
        L.kind = static_cast<LayerKind>(kind);
        L.name = r.str();
        for (int* f : {&L.in_channels, &L.out_channels, &L.kernel, &L.stride, &L.padding, &L.in_features, &L.out_features})
            *f = static_cast<int>(r.u32());
        L.relu = r.u32() != 0;
        if (L.has_parameters()) {
            const auto dtype = r.u32();
            LayerParams p;
            p.weight = r.values(dtype);
            p.bias = r.values(dtype);
            L.params = std::make_shared<const LayerParams>(std::move(p));
        }
        layers.push_back(std::move(L));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    try {
        return Classifier(std::move(id), std::move(layers), nh, nw);
    } catch (const AdapterError& e) {
        r.fail(e.what());
    }
}

// --- profiles -------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& s, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("profile line " + std::to_string(line) + ": not a number: '" + s + "'");
    }
}

std::array<double, 3> parse_triple(const std::string& s, int line) {
    std::array<double, 3> out{};
    std::stringstream ss(s);
    std::string part;
    int n = 0;
    while (std::getline(ss, part, ',')) {
        if (n == 3) break;
        out[n++] = parse_double(trim(part), line);
    }
    if (n != 3 || std::getline(ss, part))
        throw std::invalid_argument("profile line " + std::to_string(line) + ": expected three comma-separated values");
    return out;
}

int parse_int(const std::string& s, int line) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::invalid_argument("profile line " + std::to_string(line) + ": not an integer: '" + s + "'");
    return v;
}

} // namespace

ModelProfile parse_profile(std::string_view text, const std::filesystem::path& base_dir) {
    ModelProfile p;
    p.model_id.clear();
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string body = trim(std::string_view(raw).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("profile line " + std::to_string(line) + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key == "model_id") {
            p.model_id = value;
        } else if (key == "weights") {
            if (value.rfind("builtin:", 0) == 0 || base_dir.empty() || std::filesystem::path(value).is_absolute())
                p.weights = value;
            else
                p.weights = (base_dir / value).string();
        } else if (key == "seed") {
            p.reference_seed = static_cast<std::uint64_t>(parse_int(value, line));
        } else if (key == "target_layer") {
            p.target_layer = value;
        } else if (key == "mean") {
            p.stats.mean = parse_triple(value, line);
        } else if (key == "std") {
            p.stats.std = parse_triple(value, line);
            for (double s : p.stats.std)
                if (!(s > 0.0)) throw std::invalid_argument("profile line " + std::to_string(line) + ": std must be positive");
        } else if (key == "input_size") {
            const auto x = value.find('x');
            if (x == std::string::npos) {
                p.input_height = p.input_width = parse_int(value, line);
            } else {
                p.input_height = parse_int(trim(value.substr(0, x)), line);
                p.input_width = parse_int(trim(value.substr(x + 1)), line);
            }
            if (p.input_height < 1 || p.input_width < 1)
                throw std::invalid_argument("profile line " + std::to_string(line) + ": input size must be positive");
        } else {
            throw std::invalid_argument("profile line " + std::to_string(line) + ": unknown key '" + key + "'");
        }
    }
    if (p.model_id.empty()) throw std::invalid_argument("profile: model_id is required");
    return p;
}

ModelProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open model profile " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_profile(ss.str(), path.parent_path());
}

ModelProfile reference_profile(std::uint64_t seed) {
    ModelProfile p;
    p.model_id = "reference-cnn";
    p.weights = "builtin:reference";
    p.reference_seed = seed;
    p.target_layer = "conv3";
    p.input_height = kReferenceInputSize;
    p.input_width = kReferenceInputSize;
    return p;
}

Classifier instantiate(const ModelProfile& profile) {
    if (profile.weights.rfind("builtin:", 0) == 0 && profile.weights != "builtin:reference")
        throw AdapterError("unknown built-in weight source '" + profile.weights + "'");
    const Classifier model = profile.weights == "builtin:reference" ? build_reference_cnn(profile.reference_seed)
                                                                    : load_weights(profile.weights);
    if (!profile.target_layer.empty()) model.layer(profile.target_layer);
    return Classifier(profile.model_id, model.layers(), model.nominal_height(), model.nominal_width());
}

} // namespace abscam::model
