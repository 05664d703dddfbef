"""demoforge: expand one annotated manipulation demo into synthetic datasets.

One real demonstration (trajectory + segmented point clouds + two keypoint
annotations) is expanded across novel meshes by transferring the keypoints
through multi-view descriptor correspondence, replaying the grasp and skill
trajectory segments under the transferred keypoints, and synthesizing
segmented point cloud observations for every generated step.
"""

__version__ = "0.1.0"
