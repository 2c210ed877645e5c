#pragma once

#include "usgan/adain.hpp"
#include "usgan/alpha_io.hpp"
#include "usgan/checkpoint.hpp"
#include "usgan/codec.hpp"
#include "usgan/config.hpp"
#include "usgan/imaging.hpp"
#include "usgan/inference.hpp"
#include "usgan/log.hpp"
#include "usgan/losses.hpp"
#include "usgan/metrics.hpp"
#include "usgan/models.hpp"
#include "usgan/phantom.hpp"
#include "usgan/png_io.hpp"
#include "usgan/service.hpp"
#include "usgan/training.hpp"
#include "usgan/volume_io.hpp"
