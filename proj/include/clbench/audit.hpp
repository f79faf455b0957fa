#pragma once

// Sequential-access auditing: learners only see task data through TaskView, and every
// read of a task other than the one currently being trained is logged.

#include <mutex>
#include <string>
#include <vector>

#include "clbench/scenarios.hpp"

namespace clbench {

class AccessAuditor {
public:
    void set_current(int task_id) {
        std::lock_guard lock(mu_);
        current_ = task_id;
    }
    int current() const {
        std::lock_guard lock(mu_);
        return current_;
    }
    void check(int task_id, const char* what) const {
        std::lock_guard lock(mu_);
        if (task_id != current_)
            log_.push_back(std::string(what) + " of task " + std::to_string(task_id) + " read while task " +
                           std::to_string(current_) + " is active");
    }
    std::vector<std::string> log() const {
        std::lock_guard lock(mu_);
        return log_;
    }

private:
    mutable std::mutex mu_;
    int current_ = -1;
    mutable std::vector<std::string> log_;
};

/// Read handle on one task's training data.
class TaskView {
public:
    TaskView(const Task& task, const AccessAuditor* auditor = nullptr) : task_(&task), auditor_(auditor) {}

    int task_id() const { return task_->task_id; }
    const std::vector<int>& class_set() const { return task_->class_set; }

    const LabeledDataset& train() const {
        if (auditor_)
            auditor_->check(task_->task_id, "train split");
        return task_->train;
    }

private:
    const Task* task_;
    const AccessAuditor* auditor_;
};

} // namespace clbench
