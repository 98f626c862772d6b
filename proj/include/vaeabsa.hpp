#pragma once

#include "vaeabsa/binary_io.hpp"
#include "vaeabsa/checkpoint.hpp"
#include "vaeabsa/commands.hpp"
#include "vaeabsa/config.hpp"
#include "vaeabsa/corpus.hpp"
#include "vaeabsa/embed_cache.hpp"
#include "vaeabsa/error.hpp"
#include "vaeabsa/gradients.hpp"
#include "vaeabsa/inference.hpp"
#include "vaeabsa/model.hpp"
#include "vaeabsa/objective.hpp"
#include "vaeabsa/seeding.hpp"
#include "vaeabsa/synthetic.hpp"
#include "vaeabsa/training.hpp"
