#include "exconsist/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace exconsist {

namespace {

constexpr char kMagic[8] = {'E', 'X', 'C', 'C', 'K', 'P', 'T', '\x01'};

void put_i64(std::ostream& os, std::int64_t x) {
    unsigned char b[8];
    std::uint64_t u = static_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::int64_t get_i64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<std::int64_t>(u);
}

void put_f64(std::ostream& os, double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, 8);
    put_i64(os, static_cast<std::int64_t>(u));
}

double get_f64(std::istream& is) {
    std::uint64_t u = static_cast<std::uint64_t>(get_i64(is));
    double x;
    std::memcpy(&x, &u, 8);
    return x;
}

void put_str(std::ostream& os, const std::string& s) {
    put_i64(os, static_cast<std::int64_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
    const std::int64_t n = get_i64(is);
    if (n < 0 || n > (1 << 20)) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(static_cast<std::size_t>(n), '\0');
    is.read(s.data(), n);
    return s;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
    put_i64(os, static_cast<std::int64_t>(v.size()));
    for (double x : v) put_f64(os, x);
}

std::vector<double> get_vec(std::istream& is) {
    const std::int64_t n = get_i64(is);
    if (n < 0) throw std::runtime_error("checkpoint: corrupt array length");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = get_f64(is);
    return v;
}

void put_params(std::ostream& os, const std::vector<ParamArray>& ps) {
    put_i64(os, static_cast<std::int64_t>(ps.size()));
    for (const auto& p : ps) {
        put_str(os, p.name);
        put_i64(os, p.trainable ? 1 : 0);
        put_vec(os, p.v);
    }
}

std::vector<ParamArray> get_params(std::istream& is) {
    const std::int64_t n = get_i64(is);
    if (n < 0 || n > (1 << 20)) throw std::runtime_error("checkpoint: corrupt param count");
    std::vector<ParamArray> ps(static_cast<std::size_t>(n));
    for (auto& p : ps) {
        p.name = get_str(is);
        p.trainable = get_i64(is) != 0;
        p.v = get_vec(is);
    }
    return ps;
}

void copy_into(std::vector<ParamArray>& dst, const std::vector<ParamArray>& src,
               const char* which) {
    if (dst.size() != src.size())
        throw std::runtime_error(std::string("checkpoint_restore: ") + which +
                                 " parameter count mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].name != src[i].name || dst[i].v.size() != src[i].v.size())
            throw std::runtime_error(std::string("checkpoint_restore: ") + which +
                                     " mismatch at " + dst[i].name);
        dst[i].v = src[i].v;
    }
}

}  // namespace

Checkpoint checkpoint_capture(const SegNetwork& student, const SegNetwork& teacher,
                              const AdamState& optim, std::int64_t step) {
    if (!(student.config() == teacher.config()))
        throw std::invalid_argument("checkpoint_capture: student/teacher configs differ");
    Checkpoint ck;
    ck.net_cfg = student.config();
    ck.step = step;
    ck.student = student.params();
    ck.teacher = teacher.params();
    ck.optim = optim;
    return ck;
}

void checkpoint_restore(const Checkpoint& ck, SegNetwork& student,
                        SegNetwork& teacher, AdamState& optim) {
    if (!(student.config() == ck.net_cfg) || !(teacher.config() == ck.net_cfg))
        throw std::runtime_error("checkpoint_restore: network config mismatch");
    copy_into(student.params(), ck.student, "student");
    copy_into(teacher.params(), ck.teacher, "teacher");
    optim = ck.optim;
}

void checkpoint_save(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint_save: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    put_i64(os, ck.net_cfg.depth);
    put_i64(os, ck.net_cfg.in_channels);
    put_i64(os, ck.net_cfg.num_classes);
    put_i64(os, ck.net_cfg.base_width);
    put_f64(os, ck.net_cfg.dropout_rate);
    put_str(os, ck.net_cfg.upsample);
    put_i64(os, ck.step);
    put_params(os, ck.student);
    put_params(os, ck.teacher);
    put_f64(os, ck.optim.cfg.lr);
    put_f64(os, ck.optim.cfg.beta1);
    put_f64(os, ck.optim.cfg.beta2);
    put_f64(os, ck.optim.cfg.eps);
    put_i64(os, ck.optim.t);
    put_i64(os, static_cast<std::int64_t>(ck.optim.m.size()));
    for (const auto& v : ck.optim.m) put_vec(os, v);
    for (const auto& v : ck.optim.v) put_vec(os, v);
    if (!os) throw std::runtime_error("checkpoint_save: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint_load: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint_load: bad magic in " + path);
    Checkpoint ck;
    ck.net_cfg.depth = static_cast<int>(get_i64(is));
    ck.net_cfg.in_channels = static_cast<int>(get_i64(is));
    ck.net_cfg.num_classes = static_cast<int>(get_i64(is));
    ck.net_cfg.base_width = static_cast<int>(get_i64(is));
    ck.net_cfg.dropout_rate = get_f64(is);
    ck.net_cfg.upsample = get_str(is);
    ck.step = get_i64(is);
    ck.student = get_params(is);
    ck.teacher = get_params(is);
    ck.optim.cfg.lr = get_f64(is);
    ck.optim.cfg.beta1 = get_f64(is);
    ck.optim.cfg.beta2 = get_f64(is);
    ck.optim.cfg.eps = get_f64(is);
    ck.optim.t = get_i64(is);
    const std::int64_t nm = get_i64(is);
    if (nm < 0 || nm > (1 << 20)) throw std::runtime_error("checkpoint_load: corrupt moment count");
    ck.optim.m.resize(static_cast<std::size_t>(nm));
    for (auto& v : ck.optim.m) v = get_vec(is);
    ck.optim.v.resize(static_cast<std::size_t>(nm));
    for (auto& v : ck.optim.v) v = get_vec(is);
    if (!is) throw std::runtime_error("checkpoint_load: truncated file " + path);
    return ck;
}

}  // namespace exconsist
