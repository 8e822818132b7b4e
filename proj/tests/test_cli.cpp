#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "samreg/samreg.hpp"

using namespace samreg;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("SAMREG_CLI");
    REQUIRE(env != nullptr); // set by ctest
    return env;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string run_cli_stdout(const std::string& args, const fs::path& tmp) {
    const std::string cmd = cli_path() + " " + args + " >" + tmp.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WEXITSTATUS(status) == 0);
    std::ifstream in(tmp);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

struct TempTree {
    fs::path dir;
    TempTree() {
        static int counter = 0;
        dir = fs::temp_directory_path() /
              ("samreg_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~TempTree() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

} // namespace

TEST_CASE("cli: synth then segment produces one mask per blob") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "case") + " --seed 7 --blobs 3 --radius-min 14 --radius-max 14") == 0);
    REQUIRE(fs::exists(t / "case/moving.rgrd"));
    REQUIRE(run_cli("segment " + (t / "case/moving.rgrd") + " " + (t / "seg")) == 0);
    const auto records = read_mask_manifest(t / "seg/masks.tsv");
    CHECK(records.size() == 3);
    for (const auto& r : records) CHECK(to_mask(read_grid_file(r.path)).area() >= 200);
}

TEST_CASE("cli: segment walks 3D volumes slice by slice") {
    TempTree t;
    // 3 slices, one 24x24 bright box on slices 0 and 2
    GridImage vol = GridImage::zeros({3, 64, 64});
    for (std::size_t s : {0u, 2u})
        for (std::size_t r = 20; r < 44; ++r)
            for (std::size_t c = 20; c < 44; ++c) vol.data[(s * 64 + r) * 64 + c] = 1.0;
    write_grid_file(t / "vol.rgrd", from_image(vol));
    REQUIRE(run_cli("segment " + (t / "vol.rgrd") + " " + (t / "seg") + " --max-area 3000") == 0);
    const auto records = read_mask_manifest(t / "seg/masks.tsv");
    REQUIRE(records.size() == 2);
    CHECK(fs::path(records[0].path).filename() == "m_0_0.rgrd");
    CHECK(fs::path(records[1].path).filename() == "m_2_0.rgrd");
    for (const auto& r : records) CHECK(to_mask(read_grid_file(r.path)).area() == 576);
}

TEST_CASE("cli: corrupted magic is rejected with exit 2 and no outputs") {
    TempTree t;
    const GridImage img = test_helpers::random_image({32, 32}, 3);
    write_grid_file(t / "good.rgrd", from_image(img));
    auto bytes = file_bytes(t / "good.rgrd");
    bytes[1] = 'X';
    std::ofstream(t / "bad.rgrd", std::ios::binary)
        .write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));

    CHECK(run_cli("segment " + (t / "bad.rgrd") + " " + (t / "out")) == 2);
    CHECK_FALSE(fs::exists(t / "out"));

    // truncated payload behaves the same
    bytes = file_bytes(t / "good.rgrd");
    bytes.resize(bytes.size() - 3);
    std::ofstream(t / "trunc.rgrd", std::ios::binary)
        .write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    CHECK(run_cli("segment " + (t / "trunc.rgrd") + " " + (t / "out2")) == 2);
    CHECK_FALSE(fs::exists(t / "out2"));

    CHECK(run_cli("segment " + (t / "missing.rgrd") + " " + (t / "out3")) == 2);
}

TEST_CASE("cli: self-match yields the identity manifest with similarity 1") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "case") + " --seed 11 --blobs 4") == 0);
    REQUIRE(run_cli("segment " + (t / "case/moving.rgrd") + " " + (t / "seg")) == 0);
    REQUIRE(run_cli("match " + (t / "seg/masks.tsv") + " " + (t / "seg/masks.tsv") + " " +
                    (t / "case/moving.rgrd") + " " + (t / "case/moving.rgrd") + " " +
                    (t / "pairs.tsv")) == 0);

    std::ifstream in(t / "pairs.tsv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "#samreg-pairs v1");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        CHECK(line.find("1.000000") != std::string::npos);
    }
    const auto records = read_pair_manifest(t / "pairs.tsv");
    CHECK(rows == records.size());
    // every segmented candidate pairs with itself
    CHECK(records.size() == read_mask_manifest(t / "seg/masks.tsv").size());
    CHECK(records.size() >= 3);
    for (const auto& r : records) CHECK(r.moving_path == r.fixed_path);

    // determinism: a second run writes identical bytes
    REQUIRE(run_cli("match " + (t / "seg/masks.tsv") + " " + (t / "seg/masks.tsv") + " " +
                    (t / "case/moving.rgrd") + " " + (t / "case/moving.rgrd") + " " +
                    (t / "pairs2.tsv")) == 0);
    auto a = file_bytes(t / "pairs.tsv");
    auto b = file_bytes(t / "pairs2.tsv");
    CHECK(a == b);
}

TEST_CASE("cli: epsilon 1.0 excludes everything but still exits 0") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "case") + " --seed 13 --blobs 3") == 0);
    REQUIRE(run_cli("segment " + (t / "case/moving.rgrd") + " " + (t / "seg")) == 0);
    REQUIRE(run_cli("match " + (t / "seg/masks.tsv") + " " + (t / "seg/masks.tsv") + " " +
                    (t / "case/moving.rgrd") + " " + (t / "case/moving.rgrd") + " " +
                    (t / "pairs.tsv") + " --epsilon 1.0") == 0);
    CHECK(read_pair_manifest(t / "pairs.tsv").empty());
}

TEST_CASE("cli: fit on the identity manifest returns a near-zero field") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "case") + " --seed 17 --blobs 3") == 0);
    REQUIRE(run_cli("fit " + (t / "case/pairs_truth.tsv") + " --field " + (t / "ddf.rgrd") +
                    " --report " + (t / "report.txt")) == 0);
    const DisplacementField field = to_field(read_grid_file(t / "ddf.rgrd"));
    double mx = 0.0;
    for (double v : field.vectors) mx = std::max(mx, std::abs(v));
    CHECK(mx < 0.05);

    std::ifstream rep(t / "report.txt");
    std::stringstream ss;
    ss << rep.rdbuf();
    CHECK(ss.str().find("initial_loss") != std::string::npos);
    CHECK(ss.str().find("final_loss") != std::string::npos);
    CHECK(ss.str().find("pair\tdice\ttre") != std::string::npos);
}

TEST_CASE("cli: fit on an empty manifest exits 3") {
    TempTree t;
    write_pair_manifest(t / "empty.tsv", {});
    CHECK(run_cli("fit " + (t / "empty.tsv") + " --field " + (t / "ddf.rgrd") + " --report " +
                  (t / "rep.txt")) == 3);
}

TEST_CASE("cli: warp by a zero field is byte-identical") {
    TempTree t;
    const GridImage img = test_helpers::random_image({24, 24}, 5);
    write_grid_file(t / "img.rgrd", from_image(img, GridFile::kDtypeU8));
    write_grid_file(t / "zero.rgrd", from_field(DisplacementField::zeros({24, 24})));
    REQUIRE(run_cli("warp " + (t / "img.rgrd") + " " + (t / "zero.rgrd") + " " + (t / "out.rgrd")) == 0);
    CHECK(read_grid_file(t / "out.rgrd").payload == read_grid_file(t / "img.rgrd").payload);

    // dimension mismatch is an input error
    write_grid_file(t / "small.rgrd", from_field(DisplacementField::zeros({8, 8})));
    CHECK(run_cli("warp " + (t / "img.rgrd") + " " + (t / "small.rgrd") + " " + (t / "o.rgrd")) == 2);
}

TEST_CASE("cli: eval on the identity reports dice 1 and tre 0") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "case") + " --seed 19 --blobs 3") == 0);
    write_grid_file(t / "zero.rgrd", from_field(DisplacementField::zeros({128, 128})));
    const std::string out =
        run_cli_stdout("eval " + (t / "case/pairs_truth.tsv") + " " + (t / "zero.rgrd"),
                       t / "eval_out.txt");
    CHECK(out.find("pair\tdice\ttre") != std::string::npos);
    CHECK(out.find("0\t1.000000\t0.000000") != std::string::npos);
    CHECK(out.find("mean\t1.0000±0.0000\t0.0000±0.0000") != std::string::npos);
}

TEST_CASE("cli: synth with amplitude 0 writes identical moving and fixed images") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "c") + " --seed 23 --amplitude 0 --pgm") == 0);
    CHECK(read_grid_file(t / "c/moving.rgrd").payload == read_grid_file(t / "c/fixed.rgrd").payload);
    CHECK(fs::exists(t / "c/moving.pgm"));
    const auto oracle = file_bytes(t / "c/oracle.tsv");
    CHECK_FALSE(oracle.empty());
}

TEST_CASE("cli: unknown flags and missing subcommands exit 2") {
    CHECK(run_cli("segment") == 2);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--bogus") == 2);
}

TEST_CASE("cli: results do not depend on the worker count") {
    TempTree t;
    REQUIRE(run_cli("synth " + (t / "case") + " --seed 29 --blobs 5 --amplitude 4") == 0);
    REQUIRE(run_cli("segment " + (t / "case/moving.rgrd") + " " + (t / "mv")) == 0);
    REQUIRE(run_cli("segment " + (t / "case/fixed.rgrd") + " " + (t / "fx")) == 0);
    const std::string match_args = (t / "mv/masks.tsv") + " " + (t / "fx/masks.tsv") + " " +
                                   (t / "case/moving.rgrd") + " " + (t / "case/fixed.rgrd") + " ";
    REQUIRE(std::system(("SAMREG_THREADS=1 " + cli_path() + " match " + match_args +
                         (t / "p1.tsv") + " >/dev/null 2>&1").c_str()) == 0);
    REQUIRE(std::system(("SAMREG_THREADS=8 " + cli_path() + " match " + match_args +
                         (t / "p8.tsv") + " >/dev/null 2>&1").c_str()) == 0);
    CHECK(file_bytes(t / "p1.tsv") == file_bytes(t / "p8.tsv"));
    CHECK_FALSE(read_pair_manifest(t / "p1.tsv").empty());
}

TEST_CASE("cli: volumetric manifests fit a 3D field") {
    TempTree t;
    // one 32x32 blob mask reused on two slices, one slice apart
    BinaryMask blob = BinaryMask::zeros({32, 32});
    for (std::size_t r = 10; r < 22; ++r)
        for (std::size_t c = 10; c < 22; ++c) blob.data[r * 32 + c] = 1;
    write_grid_file(t / "m.rgrd", from_mask(blob));
    write_pair_manifest(t / "pairs.tsv", {{"m.rgrd", "m.rgrd", 0, 1, 1.0}});
    REQUIRE(run_cli("fit " + (t / "pairs.tsv") + " --field " + (t / "ddf.rgrd") + " --report " +
                    (t / "rep.txt") + " --depth 3 --iters 120 --lambda 0.05") == 0);
    const GridFile gf = read_grid_file(t / "ddf.rgrd");
    REQUIRE(gf.dims == Extent{3, 32, 32});
    CHECK(gf.channels == 3);
    // the fitted through-plane component at the blob approaches +1
    const DisplacementField field = to_field(gf);
    const std::size_t voxel = (0 * 32 + 15) * 32 + 15;
    CHECK(field.component(voxel, 0) > 0.5);
}
