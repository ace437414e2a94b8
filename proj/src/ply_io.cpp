#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lavt/assets.hpp"

namespace lavt {

namespace {

const char* kProps[] = {"x",       "y",       "z",     "opacity", "scale_0", "scale_1",
                        "scale_2", "rot_0",   "rot_1", "rot_2",   "rot_3",   "red",
                        "green",   "blue"};
constexpr int kNumFloatProps = 14;

}  // namespace

void export_ply(const GaussianBatch& batch, const std::string& path, bool binary) {
    batch.validate();
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    LAVT_CHECK(f.good(), "export_ply: cannot open '%s'", path.c_str());
    f << std::setprecision(9);  // full float precision for the ascii variant
    int64_t n = batch.size();
    f << "ply\n";
    f << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    f << "element vertex " << n << "\n";
    for (const char* p : kProps) f << "property float " << p << "\n";
    f << "property uchar label\n";
    f << "end_header\n";

    for (int64_t i = 0; i < n; ++i) {
        auto quat = rotation_to_quat(batch.rotation(i));
        float vals[kNumFloatProps] = {
            batch.mu[i * 3],    batch.mu[i * 3 + 1],    batch.mu[i * 3 + 2],
            batch.alpha[i],     batch.scale[i * 3],     batch.scale[i * 3 + 1],
            batch.scale[i * 3 + 2], quat[0],            quat[1],
            quat[2],            quat[3],                batch.color[i * 3],
            batch.color[i * 3 + 1], batch.color[i * 3 + 2]};
        if (binary) {
            f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
            f.write(reinterpret_cast<const char*>(&batch.label[i]), 1);
        } else {
            for (float v : vals) f << v << " ";
            f << int(batch.label[i]) << "\n";
        }
    }
    LAVT_CHECK(f.good(), "export_ply: write to '%s' failed", path.c_str());
}

GaussianBatch import_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    LAVT_CHECK(f.good(), "import_ply: cannot open '%s'", path.c_str());
    std::string line;
    LAVT_CHECK(std::getline(f, line) && line == "ply", "import_ply: '%s' is not a PLY file",
               path.c_str());
    bool binary = false;
    int64_t n = -1;
    std::vector<std::string> props;
    std::vector<std::string> types;
    while (std::getline(f, line)) {
        std::istringstream is(line);
        std::string tok;
        is >> tok;
        if (tok == "format") {
            std::string fmt;
            is >> fmt;
            binary = fmt == "binary_little_endian";
            LAVT_CHECK(binary || fmt == "ascii", "import_ply: unsupported format '%s'",
                       fmt.c_str());
        } else if (tok == "element") {
            std::string what;
            is >> what >> n;
            LAVT_CHECK(what == "vertex", "import_ply: unsupported element '%s'", what.c_str());
        } else if (tok == "property") {
            std::string type, name;
            is >> type >> name;
            types.push_back(type);
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    LAVT_CHECK(n >= 0, "import_ply: missing vertex element in '%s'", path.c_str());

    auto index_of = [&](const char* name) {
        for (size_t i = 0; i < props.size(); ++i)
            if (props[i] == name) return int(i);
        fail(strf("import_ply: '%s' lacks property '%s'", path.c_str(), name));
    };
    int idx[kNumFloatProps];
    for (int k = 0; k < kNumFloatProps; ++k) idx[k] = index_of(kProps[k]);
    int label_idx = index_of("label");

    GaussianBatch out;
    std::vector<double> row(props.size());
    for (int64_t i = 0; i < n; ++i) {
        if (binary) {
            for (size_t p = 0; p < props.size(); ++p) {
                if (types[p] == "float") {
                    float v;
                    f.read(reinterpret_cast<char*>(&v), 4);
                    row[p] = v;
                } else if (types[p] == "uchar") {
                    unsigned char v;
                    f.read(reinterpret_cast<char*>(&v), 1);
                    row[p] = v;
                } else {
                    fail(strf("import_ply: unsupported property type '%s'", types[p].c_str()));
                }
            }
        } else {
            for (size_t p = 0; p < props.size(); ++p) f >> row[p];
        }
        LAVT_CHECK(f.good(), "import_ply: truncated data in '%s'", path.c_str());
        out.mu.insert(out.mu.end(), {float(row[idx[0]]), float(row[idx[1]]), float(row[idx[2]])});
        out.alpha.push_back(float(row[idx[3]]));
        out.scale.insert(out.scale.end(),
                         {float(row[idx[4]]), float(row[idx[5]]), float(row[idx[6]])});
        Mat3 r = quat_to_rotation(
            {float(row[idx[7]]), float(row[idx[8]]), float(row[idx[9]]), float(row[idx[10]])});
        out.rot.insert(out.rot.end(), r.m.begin(), r.m.end());
        out.color.insert(out.color.end(),
                         {float(row[idx[11]]), float(row[idx[12]]), float(row[idx[13]])});
        out.label.push_back(uint8_t(row[label_idx]));
    }
    return out;
}

}  // namespace lavt
