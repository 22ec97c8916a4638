#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mgsms/atoms.hpp"
#include "mgsms/core.hpp"

namespace mgsms {

/// One trajectory frame as parsed from dump text. The reader reuses a single
/// frame buffer across a file, so memory stays flat regardless of the frame
/// count.
struct DumpFrame {
    long timestep = 0;
    SimulationBox box;
    std::vector<int> id;
    std::vector<int> type;
    std::vector<Vec3> pos;

    std::size_t size() const { return pos.size(); }
};

/// Appends one frame in LAMMPS dump text layout:
///   ITEM: TIMESTEP / ITEM: NUMBER OF ATOMS / ITEM: BOX BOUNDS / ITEM: ATOMS
/// Nine header lines, then one line per atom (id type x y z).
inline void write_dump_frame(std::FILE* f, const AtomSystem& sys, long timestep) {
    auto flag = [](bool periodic) { return periodic ? "pp" : "ff"; };
    std::fprintf(f, "ITEM: TIMESTEP\n%ld\n", timestep);
    std::fprintf(f, "ITEM: NUMBER OF ATOMS\n%zu\n", sys.size());
    std::fprintf(f, "ITEM: BOX BOUNDS %s %s %s\n", flag(sys.box.periodic_x),
                 flag(sys.box.periodic_y), flag(sys.box.periodic_z));
    std::fprintf(f, "0 %.10g\n0 %.10g\n0 %.10g\n", sys.box.lx, sys.box.ly, sys.box.lz);
    std::fprintf(f, "ITEM: ATOMS id type x y z\n");
    for (std::size_t i = 0; i < sys.size(); ++i)
        std::fprintf(f, "%d %d %.10g %.10g %.10g\n", sys.id[i], sys.type[i], sys.pos[i].x(),
                     sys.pos[i].y(), sys.pos[i].z());
}

inline void write_dump(const AtomSystem& sys, long timestep, const std::string& path,
                       bool append = false) {
    std::FILE* f = std::fopen(path.c_str(), append ? "a" : "w");
    if (!f) fail("cannot open %s for writing", path.c_str());
    write_dump_frame(f, sys, timestep);
    if (std::ferror(f)) {
        std::fclose(f);
        fail("write failed: %s", path.c_str());
    }
    std::fclose(f);
}

namespace dump_detail {

class LineReader {
public:
    explicit LineReader(const std::string& path) : path_(path), f_(std::fopen(path.c_str(), "r")) {
        if (!f_) fail("cannot open %s", path.c_str());
    }
    ~LineReader() {
        if (f_) std::fclose(f_);
    }
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    /// Reads the next line into the internal buffer; false at EOF.
    bool next() {
        buf_.clear();
        char chunk[512];
        bool got = false;
        while (std::fgets(chunk, sizeof chunk, f_)) {
            got = true;
            buf_ += chunk;
            if (!buf_.empty() && buf_.back() == '\n') {
                buf_.pop_back();
                break;
            }
        }
        if (got) ++line_no_;
        return got;
    }

    const std::string& line() const { return buf_; }
    int line_no() const { return line_no_; }

    [[noreturn]] void error(const std::string& what) const {
        fail("%s:%d: %s", path_.c_str(), line_no_, what.c_str());
    }
    void expect_item(const char* item) {
        if (!next()) fail("%s: unexpected end of file (expected '%s')", path_.c_str(), item);
        if (buf_.rfind(item, 0) != 0)
            error(format("expected '%s', got '%s'", item, buf_.c_str()));
    }

private:
    std::string path_;
    std::FILE* f_;
    std::string buf_;
    int line_no_ = 0;
};

}  // namespace dump_detail

/// Streams the frames of a dump file through `visit`, reusing one frame
/// buffer. `visit` returning false stops the scan early. Returns the number
/// of frames visited. Malformed input fails with file:line context.
inline std::size_t read_dump_frames(const std::string& path,
                                    const std::function<bool(const DumpFrame&)>& visit) {
    dump_detail::LineReader in(path);
    DumpFrame frame;
    std::size_t n_frames = 0;
    long prev_timestep = 0;

    while (true) {
        if (!in.next()) break;  // clean EOF between frames
        if (in.line().rfind("ITEM: TIMESTEP", 0) != 0)
            in.error(format("expected 'ITEM: TIMESTEP', got '%s'", in.line().c_str()));
        if (!in.next()) in.error("missing timestep value");
        char* end = nullptr;
        frame.timestep = std::strtol(in.line().c_str(), &end, 10);
        if (end == in.line().c_str()) in.error("malformed timestep");
        if (n_frames > 0 && frame.timestep <= prev_timestep)
            in.error(format("timesteps must increase: %ld after %ld", frame.timestep,
                            prev_timestep));
        prev_timestep = frame.timestep;

        in.expect_item("ITEM: NUMBER OF ATOMS");
        if (!in.next()) in.error("missing atom count");
        long n = std::strtol(in.line().c_str(), &end, 10);
        if (end == in.line().c_str() || n < 0) in.error("malformed atom count");

        in.expect_item("ITEM: BOX BOUNDS");
        {
            // Flags follow "ITEM: BOX BOUNDS "; default to pp pp pp.
            char fx[8] = "pp", fy[8] = "pp", fz[8] = "pp";
            std::sscanf(in.line().c_str(), "ITEM: BOX BOUNDS %7s %7s %7s", fx, fy, fz);
            frame.box.periodic_x = std::string(fx) == "pp";
            frame.box.periodic_y = std::string(fy) == "pp";
            frame.box.periodic_z = std::string(fz) == "pp";
        }
        double lo, hi;
        double* dims[3] = {&frame.box.lx, &frame.box.ly, &frame.box.lz};
        for (double* dim : dims) {
            if (!in.next()) in.error("missing box bound line");
            if (std::sscanf(in.line().c_str(), "%lf %lf", &lo, &hi) != 2 || hi <= lo)
                in.error(format("malformed box bounds: '%s'", in.line().c_str()));
            *dim = hi - lo;
        }

        in.expect_item("ITEM: ATOMS");
        if (in.line().rfind("ITEM: ATOMS id type x y z", 0) != 0)
            in.error(format("unsupported atom columns: '%s'", in.line().c_str()));

        frame.id.assign(n, 0);
        frame.type.assign(n, 0);
        frame.pos.assign(n, Vec3::Zero());
        for (long a = 0; a < n; ++a) {
            if (!in.next()) in.error(format("frame truncated: %ld of %ld atoms", a, n));
            int id, type;
            double x, y, z;
            if (std::sscanf(in.line().c_str(), "%d %d %lf %lf %lf", &id, &type, &x, &y, &z) != 5)
                in.error(format("malformed atom line: '%s'", in.line().c_str()));
            frame.id[a] = id;
            frame.type[a] = type;
            frame.pos[a] = Vec3(x, y, z);
        }
        ++n_frames;
        if (!visit(frame)) break;
    }
    return n_frames;
}

/// Loads one specific frame (by position in the file, not timestep value).
inline DumpFrame read_dump_frame(const std::string& path, std::size_t frame_index) {
    DumpFrame out;
    bool found = false;
    std::size_t seen = 0;
    read_dump_frames(path, [&](const DumpFrame& f) {
        if (seen++ == frame_index) {
            out = f;
            found = true;
            return false;
        }
        return true;
    });
    if (!found)
        fail("%s: frame %zu not present (file has %zu frames)", path.c_str(), frame_index, seen);
    return out;
}

}  // namespace mgsms
