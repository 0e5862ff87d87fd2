"""Desk-scale LiDAR-camera fusion toolkit.

Subpackages and modules:

- geometry: camera model and rigid transforms
- pnp: extrinsic calibration from point-pixel correspondences
- fusion: point-cloud projection, overlay rendering, TPR evaluation
- ingest: NMEA parsing, LiDAR packet reassembly, recording container, sync
- kinematics: local planar frame, trajectories, time-to-collision
- formats: text file formats shared by the CLI and the HTTP service
- cli / server: the operational shell
"""

__version__ = "0.1.0"
