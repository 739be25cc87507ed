#include <string>

#include "lidarbg/detect.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Pedestrian:
      return "pedestrian";
    case ObjectClass::Car:
      return "car";
    case ObjectClass::Truck:
      return "truck";
    case ObjectClass::LargeFreight:
      return "large_freight";
    case ObjectClass::Unknown:
      return "unknown";
  }
  return "unknown";
}

ObjectClass parse_object_class(std::string_view name) {
  if (name == "pedestrian") return ObjectClass::Pedestrian;
  if (name == "car") return ObjectClass::Car;
  if (name == "truck") return ObjectClass::Truck;
  if (name == "large_freight") return ObjectClass::LargeFreight;
  if (name == "unknown") return ObjectClass::Unknown;
  throw FormatError(0, "unknown object class '" + std::string(name) + "'");
}

ObjectClass classify_object(const OrientedBox& box, double speed, const ClassRules& r) {
  const double l = box.length;
  const double h = box.height;
  if (l > r.truck_max_length || h > r.truck_max_height) return ObjectClass::LargeFreight;
  const bool car_length = l >= r.car_min_length && l <= r.car_max_length;
  if ((l > r.car_max_length && l <= r.truck_max_length) ||
      (car_length && h >= r.car_max_height && h <= r.truck_max_height)) {
    return ObjectClass::Truck;
  }
  if (car_length && h < r.car_max_height) return ObjectClass::Car;
  if (l < r.pedestrian_max_length && h >= r.pedestrian_min_height && h <= r.pedestrian_max_height &&
      speed < r.pedestrian_max_speed) {
    return ObjectClass::Pedestrian;
  }
  return ObjectClass::Unknown;
}

}  // namespace lidarbg
