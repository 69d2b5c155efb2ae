#pragma once

#include "xbody/types.hpp"

namespace xbody {

// OpenPose BODY_25 + hands + face (68 landmarks and 2 pupils).
inline constexpr int kBodyKeypoints = 25;
inline constexpr int kHandKeypoints = 21;
inline constexpr int kFaceKeypoints = 70;
inline constexpr int kTotalKeypoints = kBodyKeypoints + 2 * kHandKeypoints + kFaceKeypoints;

// Offsets of each block inside the flattened 137-slot layout.
inline constexpr int kBodyOffset = 0;
inline constexpr int kLeftHandOffset = kBodyKeypoints;
inline constexpr int kRightHandOffset = kLeftHandOffset + kHandKeypoints;
inline constexpr int kFaceOffset = kRightHandOffset + kHandKeypoints;

namespace body25 {
inline constexpr int Nose = 0, Neck = 1, RShoulder = 2, RElbow = 3, RWrist = 4, LShoulder = 5, LElbow = 6,
                     LWrist = 7, MidHip = 8, RHip = 9, RKnee = 10, RAnkle = 11, LHip = 12, LKnee = 13,
                     LAnkle = 14, REye = 15, LEye = 16, REar = 17, LEar = 18, LBigToe = 19, LSmallToe = 20,
                     LHeel = 21, RBigToe = 22, RSmallToe = 23, RHeel = 24;
}

enum class KeypointPart { Body, Hand, Face };

inline KeypointPart keypoint_part(int slot) {
    if (slot < kLeftHandOffset) return KeypointPart::Body;
    if (slot < kFaceOffset) return KeypointPart::Hand;
    return KeypointPart::Face;
}

/// 2D detections of one person, each row (u, v, confidence) in pixels.
struct KeypointSet {
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> body =
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(kBodyKeypoints, 3);
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> left_hand =
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(kHandKeypoints, 3);
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> right_hand =
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(kHandKeypoints, 3);
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> face =
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(kFaceKeypoints, 3);

    // All blocks stacked in slot order (137 x 3).
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> stacked() const {
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> out(kTotalKeypoints, 3);
        out << body, left_hand, right_hand, face;
        return out;
    }

    static KeypointSet from_stacked(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>& s) {
        KeypointSet k;
        k.body = s.middleRows(kBodyOffset, kBodyKeypoints);
        k.left_hand = s.middleRows(kLeftHandOffset, kHandKeypoints);
        k.right_hand = s.middleRows(kRightHandOffset, kHandKeypoints);
        k.face = s.middleRows(kFaceOffset, kFaceKeypoints);
        return k;
    }
};

}  // namespace xbody
