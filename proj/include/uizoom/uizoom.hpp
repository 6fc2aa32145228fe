#pragma once

#include "uizoom/crop_planner.hpp"
#include "uizoom/error.hpp"
#include "uizoom/eval.hpp"
#include "uizoom/gating.hpp"
#include "uizoom/geometry.hpp"
#include "uizoom/imaging.hpp"
#include "uizoom/oracle_backend.hpp"
#include "uizoom/parsing.hpp"
#include "uizoom/pipeline.hpp"
#include "uizoom/serialize.hpp"
#include "uizoom/synthetic.hpp"
