#pragma once

// Everything in one include.

#include "musculo/calibrate.hpp"
#include "musculo/checks.hpp"
#include "musculo/common.hpp"
#include "musculo/csv.hpp"
#include "musculo/dynamics.hpp"
#include "musculo/gait.hpp"
#include "musculo/ik.hpp"
#include "musculo/kinematics.hpp"
#include "musculo/mesh.hpp"
#include "musculo/mocap.hpp"
#include "musculo/model.hpp"
#include "musculo/model_io.hpp"
#include "musculo/muscle.hpp"
#include "musculo/parallel.hpp"
#include "musculo/rng.hpp"
#include "musculo/routing.hpp"
#include "musculo/tasks.hpp"
#include "musculo/trajectory.hpp"
