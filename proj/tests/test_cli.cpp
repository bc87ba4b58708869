#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "attncodec/formats.hpp"
#include "attncodec/synthetic.hpp"

namespace fs = std::filesystem;
using namespace attncodec;

namespace {

struct CliRun {
    int status = -1;
    std::string out, err;
};

// One directory per test so ctest -j can run them side by side.
fs::path work() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    fs::path d = fs::path(ATTNCODEC_WORK_DIR) / (info ? info->name() : "shared");
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

CliRun cli(const std::string& args) {
    const fs::path out = work() / "stdout.txt", err = work() / "stderr.txt";
    const std::string cmd = std::string("cd '") + work().string() + "' && '" ATTNCODEC_CLI "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

void write(const std::string& name, const std::string& text) { std::ofstream(work() / name, std::ios::binary) << text; }

class Cli : public ::testing::Test {
  protected:
    void SetUp() override {
        write_ppm(synthetic::natural(64, 48, 3), (work() / "img.ppm").string());
        ASSERT_EQ(cli("init-model --out toy.ctwt --seed 1").status, 0);
        ASSERT_EQ(cli("init-model --out flat.ctwt --seed 1 --uniform-attention").status, 0);
    }
};

}  // namespace

TEST_F(Cli, HelpMatchesGoldenFiles) {
    for (const char* sub : {"encode", "decode", "guide", "analyze", "rd-sweep", "train-adapter", "bd-rate", "init-model"}) {
        const CliRun r = cli(std::string(sub) + " --help");
        EXPECT_EQ(r.status, 0) << sub;
        const std::string golden = slurp(fs::path(ATTNCODEC_GOLDEN_DIR) / (std::string("help_") + sub + ".txt"));
        EXPECT_EQ(r.out, golden) << sub;
    }
}

TEST_F(Cli, EncodeDecodeRoundTripsGuidance) {
    ASSERT_EQ(cli("guide --in img.ppm --model toy.ctwt --grid 8x8 --out map.json").status, 0);
    ASSERT_EQ(cli("encode --in img.ppm --out a.ctam --preset 5 --model toy.ctwt --guide").status, 0);
    ASSERT_EQ(cli("encode --in img.ppm --out b.ctam --preset 5 --guidance map.json").status, 0);
    EXPECT_EQ(slurp(work() / "a.ctam"), slurp(work() / "b.ctam"));
    const CliRun d = cli("decode --in a.ctam --out a.ppm --map-out back.json --dump-latent lat.ctwt");
    ASSERT_EQ(d.status, 0) << d.err;
    const auto m1 = nlohmann::json::parse(slurp(work() / "map.json"));
    const auto m2 = nlohmann::json::parse(slurp(work() / "back.json"));
    EXPECT_EQ(m1.at("levels"), m2.at("levels"));
    const Image img = read_ppm((work() / "a.ppm").string());
    EXPECT_EQ(img.width, 64u);
    EXPECT_EQ(read_container((work() / "lat.ctwt").string()).entry("latent.symbols").dims, (Shape{48, 3, 64}));
}

TEST_F(Cli, UniformAttentionGivesAllBaseMap) {
    ASSERT_EQ(cli("guide --in img.ppm --model flat.ctwt --out flat.json").status, 0);
    const auto j = nlohmann::json::parse(slurp(work() / "flat.json"));
    for (const auto& row : j.at("levels"))
        for (const auto& v : row) EXPECT_EQ(v.get<int>(), 0);
}

TEST_F(Cli, TiledGuidance) {
    const CliRun r = cli("guide --in img.ppm --model toy.ctwt --grid 8x8 --tiles 2x2 --out tiled.json");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(slurp(work() / "tiled.json")).at("rows").get<int>(), 8);
    EXPECT_EQ(cli("guide --in img.ppm --model toy.ctwt --grid 8x8 --tiles 3x3 --out bad.json").status, 2);
}

TEST_F(Cli, BdRateOfDoubledRate) {
    std::string a = "preset,bpp,psnr\n", b = a;
    for (int i = 0; i < 5; ++i) {
        const double q = 30 + 3 * i, rate = std::pow(10.0, (q - 36) / 12);
        a += std::to_string(i) + "," + std::to_string(rate) + "," + std::to_string(q) + "\n";
        b += std::to_string(i) + "," + std::to_string(2 * rate) + "," + std::to_string(q) + "\n";
    }
    write("anchor.csv", a);
    write("test.csv", b);
    const CliRun r = cli("bd-rate --anchor anchor.csv --test test.csv");
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(r.out, "+100.00%\n");
}

TEST_F(Cli, RdSweepCsv) {
    const CliRun r = cli("rd-sweep --in img.ppm --presets 0 4 9");
    ASSERT_EQ(r.status, 0) << r.err;
    std::istringstream is(r.out);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "preset,bpp,psnr");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST_F(Cli, AnalyzeWritesReports) {
    ASSERT_EQ(cli("encode --in img.ppm --out r.ctam --preset 1").status, 0);
    ASSERT_EQ(cli("decode --in r.ctam --out r.ppm").status, 0);
    const CliRun r = cli("analyze --a img.ppm --b r.ppm --model toy.ctwt --out report");
    ASSERT_EQ(r.status, 0) << r.err;
    for (const char* f : {"distances.csv", "similarity.csv", "flow.json", "pca.json", "stages.json"})
        EXPECT_TRUE(fs::exists(work() / "report" / f)) << f;
    EXPECT_EQ(slurp(work() / "report" / "distances.csv").rfind("layer,d_avg,d_top1\n", 0), 0u);
}

TEST_F(Cli, TrainAdapterIsDeterministic) {
    const std::string args = "train-adapter --model toy.ctwt --synthetic 4 --steps 4 --batch 2 --seed 3 ";
    ASSERT_EQ(cli(args + "--out ad1.ctwt --history h1.csv").status, 0);
    ASSERT_EQ(cli(args + "--out ad2.ctwt --history h2.csv").status, 0);
    EXPECT_EQ(slurp(work() / "ad1.ctwt"), slurp(work() / "ad2.ctwt"));
    EXPECT_EQ(slurp(work() / "h1.csv"), slurp(work() / "h2.csv"));
    EXPECT_EQ(slurp(work() / "h1.csv").rfind("step,l_low,l_high,l_total\n", 0), 0u);
}

TEST_F(Cli, ConfigFileAndOverrides) {
    write("cfg.json", R"({"preset": 3, "gamma": 4})");
    ASSERT_EQ(cli("encode --in img.ppm --out c1.ctam --config cfg.json").status, 0);
    ASSERT_EQ(cli("encode --in img.ppm --out c2.ctam --preset 3 --gamma 4").status, 0);
    EXPECT_EQ(slurp(work() / "c1.ctam"), slurp(work() / "c2.ctam"));
    ASSERT_EQ(cli("encode --in img.ppm --out c3.ctam --config cfg.json --preset 7").status, 0);
    ASSERT_EQ(cli("encode --in img.ppm --out c4.ctam --preset 7 --gamma 4").status, 0);
    EXPECT_EQ(slurp(work() / "c3.ctam"), slurp(work() / "c4.ctam"));
    write("bad_cfg.json", R"({"preset": 3, "qualty": 9})");
    const CliRun r = cli("encode --in img.ppm --out c5.ctam --config bad_cfg.json");
    EXPECT_EQ(r.status, 1);
    EXPECT_EQ(r.err.rfind("ERROR:usage:", 0), 0u);
    EXPECT_NE(r.err.find("qualty"), std::string::npos);
}

TEST_F(Cli, ExitCodesAndErrorPrefix) {
    CliRun r = cli("encode --in img.ppm");
    EXPECT_EQ(r.status, 1);
    EXPECT_EQ(r.err.rfind("ERROR:usage:", 0), 0u);
    r = cli("frobnicate");
    EXPECT_EQ(r.status, 1);
    r = cli("encode --in img.ppm --out x.ctam --preset 12");
    EXPECT_EQ(r.status, 1);
    r = cli("decode --in missing.ctam --out x.ppm");
    EXPECT_EQ(r.status, 2);
    EXPECT_EQ(r.err.rfind("ERROR:io:", 0), 0u);
    write("junk.ctam", "not a stream at all");
    r = cli("decode --in junk.ctam --out x.ppm");
    EXPECT_EQ(r.status, 2);
    EXPECT_EQ(r.err.rfind("ERROR:format:", 0), 0u);
    ASSERT_EQ(cli("encode --in img.ppm --out a.ctam").status, 0);
    const std::string good = slurp(work() / "a.ctam");
    write("cut.ctam", good.substr(0, good.size() / 2));
    r = cli("decode --in cut.ctam --out x.ppm");
    EXPECT_EQ(r.status, 2);
    EXPECT_EQ(r.err.rfind("ERROR:corrupt:", 0), 0u);
    r = cli("guide --in img.ppm --model img.ppm --out m.json");
    EXPECT_EQ(r.status, 2);
    EXPECT_EQ(r.err.rfind("ERROR:format:", 0), 0u);
}
