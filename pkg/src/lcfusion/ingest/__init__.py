"""Sensor stream ingestion: NMEA parsing, LiDAR packet reassembly, the
recording container, stream synchronization, and the recording pipeline."""

from .bag import (
    BadMagic,
    BagReader,
    BagRecord,
    BagTopic,
    BagWriter,
    TOPIC_TYPE_IMAGE_PNG,
    TOPIC_TYPE_NMEA,
    TOPIC_TYPE_POINTCLOUD,
    TruncatedRecord,
    UnknownTopicId,
    bag_read,
    bag_write,
    decode_frame_payload,
    encode_frame_payload,
)
from .nmea import (
    BadChecksum,
    FixQuality,
    GgaFix,
    MalformedField,
    MalformedSentence,
    RmcFix,
    UnsupportedSentence,
    nmea_checksum,
    parse_nmea,
)
from .packets import (
    AssemblerStats,
    FrameAssembler,
    LidarPacket,
    TruncatedPacket,
    assemble_frames,
    decode_packet,
    encode_packet,
    read_packet_file,
    read_packets_bytes,
    split_frame_into_packets,
)
from .pipeline import RecordingPipeline
from .sync import SyncedSample, SyncStats, UnsortedInput, synchronize

__all__ = [
    "BadChecksum",
    "BadMagic",
    "BagReader",
    "BagRecord",
    "BagTopic",
    "BagWriter",
    "FixQuality",
    "FrameAssembler",
    "AssemblerStats",
    "GgaFix",
    "LidarPacket",
    "MalformedField",
    "MalformedSentence",
    "RecordingPipeline",
    "RmcFix",
    "SyncStats",
    "SyncedSample",
    "TOPIC_TYPE_IMAGE_PNG",
    "TOPIC_TYPE_NMEA",
    "TOPIC_TYPE_POINTCLOUD",
    "TruncatedPacket",
    "TruncatedRecord",
    "UnknownTopicId",
    "UnsupportedSentence",
    "assemble_frames",
    "bag_read",
    "bag_write",
    "decode_frame_payload",
    "decode_packet",
    "encode_frame_payload",
    "encode_packet",
    "nmea_checksum",
    "parse_nmea",
    "read_packet_file",
    "read_packets_bytes",
    "split_frame_into_packets",
    "synchronize",
]
