// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Scorer used by the adapter tests. Usage: stub_adapter <exchange_dir>.
// GAUSSADV_STUB_MODE selects the response:
//   echo (default)  0.5 for every image
//   brightness      mean of all channels of each PNG
//   missing         omits the last index
//   nan             NaN for index 0
//   sleep           sleeps 5 s before answering
//   fail            exits with status 3
//   label           0.25 with label "car"
#include "gaussadv/png.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

int main(int argc, char **argv) {
    if (argc != 2)
        return 2;
    const std::filesystem::path dir(argv[1]);
    const char *env = std::getenv("GAUSSADV_STUB_MODE");
    const std::string mode = env ? env : "echo";
    if (mode == "fail")
        return 3;
    if (mode == "sleep")
        std::this_thread::sleep_for(std::chrono::seconds(5));

    std::ifstream mf(dir / "manifest.json");
    const nlohmann::json manifest = nlohmann::json::parse(mf);
    const auto count = manifest.at("count").get<std::size_t>();

    std::ofstream out(dir / "scores.jsonl");
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%04zu.png", i);
        if (!std::filesystem::exists(dir / name))
            return 4;
        if (mode == "missing" && i + 1 == count)
            break;
        char line[160];
        if (mode == "brightness") {
            const gaussadv::RgbImage img = gaussadv::read_png((dir / name).string());
            double acc = 0;
            long n = 0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < img.height(); ++y)
                    for (int x = 0; x < img.width(); ++x, ++n)
                        acc += img[c](y, x);
            std::snprintf(line, sizeof line, "{\"index\": %zu, \"confidence\": %.17g}", i, acc / static_cast<double>(n));
        } else if (mode == "nan" && i == 0) {
            std::snprintf(line, sizeof line, "{\"index\": %zu, \"confidence\": NaN}", i);
        } else if (mode == "label") {
            std::snprintf(line, sizeof line, "{\"index\": %zu, \"confidence\": 0.25, \"label\": \"car\"}", i);
        } else {
            std::snprintf(line, sizeof line, "{\"index\": %zu, \"confidence\": 0.5}", i);
        }
        out << line << '\n';
    }
    return 0;
}
