#include "bgfg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace bgfg {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <class T>
T number(const std::string& key, const std::string& v) {
    T out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty())
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    return out;
}

bool boolean(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<std::size_t> list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(number<std::size_t>(key, trim(item)));
    if (out.empty()) throw ConfigError("config: " + key + " expects a comma-separated list");
    return out;
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string real(Real v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

TrainingConfig preset(const std::string& name) {
    if (name == "desk") return TrainingConfig::desk();
    if (name == "paper") return TrainingConfig::paper();
    throw ConfigError("config: unknown profile '" + name + "' (expected desk or paper)");
}

}  // namespace

Setting parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
    return {trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))};
}

void apply_setting(TrainingConfig& c, const std::string& key, const std::string& v) {
    if (key == "profile") {
        const TrainingConfig base = preset(v);
        c = base;
    } else if (key == "seed") c.seed = number<std::uint64_t>(key, v);
    else if (key == "lambda") c.lambda = number<Real>(key, v);
    else if (key == "init_std") c.init_std = number<Real>(key, v);
    else if (key == "momentum") c.momentum = number<Real>(key, v);
    else if (key == "stage1.input_size") c.stage1.input_size = number<std::size_t>(key, v);
    else if (key == "stage1.channels") c.stage1.channel_progression = list(key, v);
    else if (key == "stage1.latent_channels") c.stage1.latent_channels = number<std::size_t>(key, v);
    else if (key == "stage1.batchnorm") c.stage1.use_batchnorm = boolean(key, v);
    else if (key == "stage1.slope") c.stage1.encoder_slope = number<Real>(key, v);
    else if (key == "stage2.in_channels") c.stage2.in_channels = number<std::size_t>(key, v);
    else if (key == "stage2.input_size") c.stage2.input_size = number<std::size_t>(key, v);
    else if (key == "stage2.stage_channels") c.stage2.stage_channels = list(key, v);
    else if (key == "stage2.fc6_dilation") c.stage2.fc6_dilation = number<std::size_t>(key, v);
    else if (key == "stage2.output_stride") c.stage2.output_stride = number<std::size_t>(key, v);
    else if (key == "stage2.fc_channels") c.stage2.fc_channels = number<std::size_t>(key, v);
    else if (key == "stage2.batchnorm") c.stage2.use_batchnorm = boolean(key, v);
    else if (key.size() > 6 && key.starts_with("step") && key[4] >= '1' && key[4] <= '3' && key[5] == '.') {
        StepSpec& s = c.steps[std::size_t(key[4] - '1')];
        const std::string field = key.substr(6);
        if (field == "batch_size") s.batch_size = number<std::size_t>(key, v);
        else if (field == "learning_rate") s.learning_rate = number<Real>(key, v);
        else if (field == "iterations") s.iterations = number<std::size_t>(key, v);
        else if (field == "scope") s.scope = parse_scope(v);
        else throw ConfigError("config: unknown key '" + key + "'");
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

TrainingConfig parse_config(const std::string& text, const std::vector<Setting>& overrides) {
    std::vector<Setting> settings;
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        if (line.find('=') == std::string::npos)
            throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
        settings.push_back(parse_override(line));
    }
    settings.insert(settings.end(), overrides.begin(), overrides.end());

    std::string profile = "desk";
    for (const auto& [k, v] : settings)
        if (k == "profile") profile = v;
    TrainingConfig c = preset(profile);
    for (const auto& [k, v] : settings)
        if (k != "profile") apply_setting(c, k, v);
    c.validate();
    return c;
}

TrainingConfig load_config(const std::string& path, const std::vector<Setting>& overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string describe(const TrainingConfig& c) {
    std::ostringstream o;
    o << "profile = " << c.profile << '\n'
      << "seed = " << c.seed << '\n'
      << "lambda = " << real(c.lambda) << '\n'
      << "init_std = " << real(c.init_std) << '\n'
      << "momentum = " << real(c.momentum) << '\n'
      << "stage1.input_size = " << c.stage1.input_size << '\n'
      << "stage1.channels = " << join(c.stage1.channel_progression) << '\n'
      << "stage1.latent_channels = " << c.stage1.latent_channels << '\n'
      << "stage1.batchnorm = " << (c.stage1.use_batchnorm ? "true" : "false") << '\n'
      << "stage1.slope = " << real(c.stage1.encoder_slope) << '\n'
      << "stage2.in_channels = " << c.stage2.in_channels << '\n'
      << "stage2.input_size = " << c.stage2.input_size << '\n'
      << "stage2.stage_channels = " << join(c.stage2.stage_channels) << '\n'
      << "stage2.fc6_dilation = " << c.stage2.fc6_dilation << '\n'
      << "stage2.output_stride = " << c.stage2.output_stride << '\n'
      << "stage2.fc_channels = " << c.stage2.fc_channels << '\n'
      << "stage2.batchnorm = " << (c.stage2.use_batchnorm ? "true" : "false") << '\n';
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& s = c.steps[i];
        const std::string p = "step" + std::to_string(i + 1) + ".";
        o << p << "batch_size = " << s.batch_size << '\n'
          << p << "learning_rate = " << real(s.learning_rate) << '\n'
          << p << "iterations = " << s.iterations << '\n'
          << p << "scope = " << to_string(s.scope) << '\n';
    }
    return o.str();
}

}  // namespace bgfg
