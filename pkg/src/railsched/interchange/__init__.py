"""Serialization, instance generation, LP export and time-distance diagrams."""

from railsched.interchange.io import (
    CSV_COLUMNS,
    InstanceSyntaxError,
    TimetableFormatError,
    instance_to_dict,
    load_instance,
    parse_instance,
    read_timetable_csv,
    write_instance,
    write_timetable_csv,
)
from railsched.interchange.generator import (
    GeneratorOptions,
    desk_instance_file,
    generate_instance,
    random_desk_instance,
)
from railsched.interchange.lpformat import SubsetExplosion, build_mip, export_mip
from railsched.interchange.svg import EmptyTimetable, render_time_distance_svg

__all__ = [
    "CSV_COLUMNS",
    "EmptyTimetable",
    "GeneratorOptions",
    "InstanceSyntaxError",
    "SubsetExplosion",
    "TimetableFormatError",
    "build_mip",
    "desk_instance_file",
    "export_mip",
    "generate_instance",
    "instance_to_dict",
    "load_instance",
    "parse_instance",
    "random_desk_instance",
    "read_timetable_csv",
    "render_time_distance_svg",
    "write_instance",
    "write_timetable_csv",
]
