#include "warp4d/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace warp4d {

namespace {

using nlohmann::json;

json load_json_file(const std::string& path, const char* what) {
    std::ifstream fs(path);
    if (!fs) throw IoError(std::string(what) + ": cannot open " + path);
    json j;
    try {
        fs >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string(what) + ": " + path + ": " + e.what());
    }
    return j;
}

}  // namespace

void save_camera_json(const std::string& path, const Camera& cam) {
    if (cam.K(0, 1) != 0.0)
        throw IoError("save_camera_json: cameras with skew are not representable");
    json j;
    j["fx"] = cam.K(0, 0);
    j["fy"] = cam.K(1, 1);
    j["cx"] = cam.K(0, 2);
    j["cy"] = cam.K(1, 2);
    j["R"] = cam.R.m;
    j["T"] = std::array<double, 3>{cam.T.x, cam.T.y, cam.T.z};
    std::ofstream fs(path, std::ios::trunc);
    if (!fs) throw IoError("save_camera_json: cannot open " + path);
    fs << j.dump(2) << "\n";
    if (!fs) throw IoError("save_camera_json: short write to " + path);
}

Camera load_camera_json(const std::string& path) {
    const json j = load_json_file(path, "load_camera_json");
    try {
        Camera cam;
        cam.K = Mat3::from_rows({j.at("fx").get<double>(), 0.0, j.at("cx").get<double>()},
                                {0.0, j.at("fy").get<double>(), j.at("cy").get<double>()},
                                {0.0, 0.0, 1.0});
        const auto r = j.at("R").get<std::array<double, 9>>();
        cam.R.m = r;
        const auto t = j.at("T").get<std::array<double, 3>>();
        cam.T = {t[0], t[1], t[2]};
        cam.validate();
        return cam;
    } catch (const json::exception& e) {
        throw IoError("load_camera_json: " + path + ": " + e.what());
    }
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    static_assert(std::endian::native == std::endian::little,
                  "float serialization assumes a little-endian host");
    json manifest = json::array();
    size_t total = 0;
    for (const NamedTensor& t : tensors) {
        size_t n = 1;
        for (int d : t.shape) n *= static_cast<size_t>(d);
        if (n != t.data.size())
            throw DimensionError("save_checkpoint: tensor " + t.name +
                                 " shape does not match its payload");
        manifest.push_back({{"name", t.name}, {"shape", t.shape}});
        total += n;
    }
    std::ofstream fs(path, std::ios::binary | std::ios::trunc);
    if (!fs) throw IoError("save_checkpoint: cannot open " + path);
    fs << json({{"tensors", manifest}}).dump() << "\n";
    std::vector<char> payload;
    payload.reserve(total * 4);
    for (const NamedTensor& t : tensors)
        for (double v : t.data) {
            const float f = static_cast<float>(v);
            char b[4];
            std::memcpy(b, &f, 4);
            payload.insert(payload.end(), b, b + 4);
        }
    fs.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!fs) throw IoError("save_checkpoint: short write to " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream fs(path, std::ios::binary);
    if (!fs) throw IoError("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(fs, line)) throw IoError("load_checkpoint: " + path + " is empty");
    json manifest;
    try {
        manifest = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("load_checkpoint: " + path + ": bad manifest: " + e.what());
    }
    std::vector<NamedTensor> out;
    for (const json& entry : manifest.at("tensors")) {
        NamedTensor t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<int>>();
        size_t n = 1;
        for (int d : t.shape) n *= static_cast<size_t>(d);
        t.data.resize(n);
        std::vector<char> buf(n * 4);
        fs.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (static_cast<size_t>(fs.gcount()) != buf.size())
            throw IoError("load_checkpoint: " + path + " truncated in tensor " + t.name);
        for (size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, buf.data() + i * 4, 4);
            t.data[i] = static_cast<double>(f);
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace warp4d
